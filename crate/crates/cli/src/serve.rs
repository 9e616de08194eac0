use std::net::{IpAddr, SocketAddr};
use std::path::Path;
use std::sync::Arc;

use civet_annotate::{Campaign, CampaignConfig, Store, serve};

use crate::Result;

/// Load a campaign and serve it until the process is stopped.
pub fn cmd_serve(campaign_file: &Path, host: IpAddr, port: u16) -> Result<()> {
    let cfg = CampaignConfig::load(campaign_file)?;
    let campaign = Campaign::load(cfg)?;
    log::info!("campaign: {} stimuli, target {}", campaign.stimuli.len(), campaign.config.target);
    let store = Arc::new(Store::open(campaign)?);
    let status = store.status();
    log::info!("annotations so far: {}", status.progress);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(serve(store, SocketAddr::new(host, port)))?;
    Ok(())
}
