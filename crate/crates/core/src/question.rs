//! Closed-ended question instantiation with balanced option ordering.

use std::fmt;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, invalid};
use crate::world::{
    Category, Color, RelPosLabel, RelSizeLabel, SectionLabel, Setting, Shape, Sheen, Vocabulary, World, closest_object,
    relative_position_of, relative_size_of, section_of,
};

pub const INSTRUCTION: &str = "Answer with as few words as possible.";

/// Orders with at most this many options are cycled in lexicographic order;
/// longer lists use a seeded shuffle.
pub const MAX_CYCLED_OPTIONS: usize = 5;

const SHUFFLE_SEED: u64 = 0x6369_7665_745f_6f70;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Shape,
    Color,
    Sheen,
    Category,
    AbsolutePosition,
    RelativePosition,
    RelativeDistance,
    RelativeSize,
}

impl Aspect {
    pub const ALL: [Aspect; 8] = [
        Aspect::Shape,
        Aspect::Color,
        Aspect::Sheen,
        Aspect::Category,
        Aspect::AbsolutePosition,
        Aspect::RelativePosition,
        Aspect::RelativeDistance,
        Aspect::RelativeSize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Aspect::Shape => "shape",
            Aspect::Color => "color",
            Aspect::Sheen => "sheen",
            Aspect::Category => "category",
            Aspect::AbsolutePosition => "absolute_position",
            Aspect::RelativePosition => "relative_position",
            Aspect::RelativeDistance => "relative_distance",
            Aspect::RelativeSize => "relative_size",
        }
    }

    pub fn parse(s: &str) -> Option<Aspect> {
        Aspect::ALL.into_iter().find(|a| a.as_str() == s)
    }

    /// Suffix appended to the world id to form a stimulus id.
    pub fn code(self) -> &'static str {
        match self {
            Aspect::Shape => "shape",
            Aspect::Color => "color",
            Aspect::Sheen => "sheen",
            Aspect::Category => "category",
            Aspect::AbsolutePosition => "abspos",
            Aspect::RelativePosition => "relpos",
            Aspect::RelativeDistance => "reldist",
            Aspect::RelativeSize => "relsize",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Aspects that can be asked about worlds of a setting.
pub fn aspects_for(setting: Setting) -> &'static [Aspect] {
    match setting {
        Setting::SingleObject => &[Aspect::Shape, Aspect::Color, Aspect::Sheen, Aspect::AbsolutePosition],
        Setting::SingleObjectCoco => &[Aspect::Category, Aspect::AbsolutePosition],
        Setting::RelativePosition => &[Aspect::RelativePosition],
        Setting::RelativeSize => &[Aspect::RelativeSize],
        Setting::RelativeDistance => &[Aspect::RelativeDistance],
    }
}

/// Whether `aspect` yields a well-posed question about `world`. Sheen is only
/// asked of matte or glossy objects, making it a two-way choice.
pub fn applies(aspect: Aspect, world: &World) -> bool {
    aspects_for(world.setting()).contains(&aspect)
        && (aspect != Aspect::Sheen || world.primary().sheen().is_some_and(|s| s != Sheen::None))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionInstance {
    pub stimulus_id: String,
    pub world_id: String,
    pub setting: Setting,
    pub aspect: Aspect,
    pub text: String,
    pub options: Vec<String>,
    pub ground_truth: String,
    pub permutation_index: u64,
    pub image_path: String,
}

pub fn stimulus_id(world: &World, aspect: Aspect) -> String {
    format!("{}-{}", world.id(), aspect.code())
}

/// Relative path of a world's scene inside an output bundle.
pub fn image_path(world: &World) -> String {
    format!("images/{}.png", world.id())
}

fn names<V: Vocabulary>(values: &[V]) -> Vec<String> {
    values.iter().map(|v| v.as_str().to_string()).collect()
}

/// All answer options for `aspect`, in canonical (unshuffled) order.
pub fn option_set(aspect: Aspect, world: &World) -> Vec<String> {
    match aspect {
        Aspect::Shape => names(Shape::ALL),
        Aspect::Color => names(Color::ALL),
        Aspect::Sheen => names(&[Sheen::Matte, Sheen::Glossy]),
        Aspect::Category => names(Category::ALL),
        Aspect::AbsolutePosition => names(SectionLabel::ALL),
        Aspect::RelativePosition => names(RelPosLabel::ALL),
        Aspect::RelativeSize => names(RelSizeLabel::ALL),
        Aspect::RelativeDistance => world.objects()[1..]
            .iter()
            .filter_map(|o| o.shape())
            .map(|s| s.to_string())
            .collect(),
    }
}

fn shape_name(world: &World, i: usize) -> Result<Shape> {
    world
        .objects()
        .get(i)
        .and_then(|o| o.shape())
        .ok_or_else(|| invalid(format!("world {} has no elementary object #{i}", world.id())))
}

fn question_body(aspect: Aspect, world: &World) -> Result<String> {
    Ok(match aspect {
        Aspect::Shape | Aspect::Color | Aspect::Sheen | Aspect::Category => {
            format!("What is the {aspect} of the object?")
        }
        Aspect::AbsolutePosition => format!("Where is the {}?", world.primary().description()),
        Aspect::RelativePosition => format!(
            "Where is the {} positioned with respect to the {}?",
            shape_name(world, 0)?,
            shape_name(world, 1)?
        ),
        Aspect::RelativeDistance => format!("What is the closest object to the {}?", shape_name(world, 0)?),
        Aspect::RelativeSize => format!(
            "What is the size of the {} with respect to the {}?",
            shape_name(world, 0)?,
            shape_name(world, 1)?
        ),
    })
}

/// The correct option for `aspect`, computed from the world's structure.
pub fn ground_truth(aspect: Aspect, world: &World) -> Result<String> {
    let objects = world.objects();
    let first = world.primary();
    let missing = || invalid(format!("{aspect} is undefined for world {}", world.id()));
    Ok(match aspect {
        Aspect::Shape => first.shape().ok_or_else(missing)?.to_string(),
        Aspect::Color => first.color().ok_or_else(missing)?.to_string(),
        Aspect::Sheen => first.sheen().ok_or_else(missing)?.to_string(),
        Aspect::Category => first.category().ok_or_else(missing)?.to_string(),
        Aspect::AbsolutePosition => section_of(first.cell).to_string(),
        Aspect::RelativePosition => relative_position_of(first.cell, objects[1].cell)?.to_string(),
        Aspect::RelativeSize => relative_size_of(first.size, objects[1].size).to_string(),
        Aspect::RelativeDistance => closest_object(first, &objects[1..])?.shape().ok_or_else(missing)?.to_string(),
    })
}

fn factorial(k: usize) -> u64 {
    (1..=k as u64).product()
}

/// Permutation of `0..k` used to order the options of the question with the
/// given index.
///
/// Up to five options, indices cycle through all `k!` orders in lexicographic
/// order, so sequential indices use every order equally often (to within one).
/// Above that, a shuffle seeded by the index is used.
pub fn option_order(k: usize, permutation_index: u64) -> Vec<usize> {
    if k <= MAX_CYCLED_OPTIONS {
        let mut rank = permutation_index % factorial(k);
        let mut pool: Vec<usize> = (0..k).collect();
        let mut out = Vec::with_capacity(k);
        for remaining in (1..=k).rev() {
            let block = factorial(remaining - 1);
            let pick = (rank / block) as usize;
            rank %= block;
            out.push(pool.remove(pick));
        }
        out
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(SHUFFLE_SEED);
        rng.set_stream(permutation_index);
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        order
    }
}

pub fn build_question(world: &World, aspect: Aspect, permutation_index: u64) -> Result<QuestionInstance> {
    if !applies(aspect, world) {
        return Err(invalid(format!(
            "{aspect} questions cannot be asked about {} world {}",
            world.setting(),
            world.id()
        )));
    }
    let canonical = option_set(aspect, world);
    let options: Vec<String> = option_order(canonical.len(), permutation_index)
        .into_iter()
        .map(|i| canonical[i].clone())
        .collect();
    let text = format!(
        "{INSTRUCTION} {} Choose from [{}].",
        question_body(aspect, world)?,
        options.join(", ")
    );
    Ok(QuestionInstance {
        stimulus_id: stimulus_id(world, aspect),
        world_id: world.id().to_string(),
        setting: world.setting(),
        aspect,
        text,
        options,
        ground_truth: ground_truth(aspect, world)?,
        permutation_index,
        image_path: image_path(world),
    })
}

/// Questions about `aspect` for every applicable world, with permutation
/// indices assigned sequentially in world order.
pub fn build_questions(worlds: &[World], aspect: Aspect) -> Result<Vec<QuestionInstance>> {
    worlds
        .iter()
        .filter(|w| applies(aspect, w))
        .enumerate()
        .map(|(i, w)| build_question(w, aspect, i as u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::{HashMap, HashSet};

    use regex::Regex;

    use super::*;
    use crate::world::{self, Cell, ObjectSpec, SizeClass};

    fn yellow_star_at(r: u8, c: u8) -> World {
        let obj = ObjectSpec::elementary(Shape::Star, Color::Yellow, Sheen::None, SizeClass::Regular, Cell::new(r, c).unwrap());
        World::new(Setting::SingleObject, vec![obj]).unwrap()
    }

    #[test]
    fn absolute_position_prompt() {
        let q = build_question(&yellow_star_at(0, 0), Aspect::AbsolutePosition, 0).unwrap();
        assert!(q.text.contains("Where is the yellow star?"), "{}", q.text);
        assert_eq!(q.ground_truth, "top left");
        assert_eq!(q.stimulus_id, "so-star-yellow-none-r0c0-abspos");
        assert_eq!(q.image_path, "images/so-star-yellow-none-r0c0.png");
    }

    #[test]
    fn sheened_reference_includes_sheen_word() {
        let obj = ObjectSpec::elementary(Shape::Circle, Color::Red, Sheen::Glossy, SizeClass::Regular, Cell::new(8, 8).unwrap());
        let w = World::new(Setting::SingleObject, vec![obj]).unwrap();
        let q = build_question(&w, Aspect::AbsolutePosition, 3).unwrap();
        assert!(q.text.contains("Where is the glossy red circle?"));
        assert_eq!(q.ground_truth, "bottom right");
    }

    #[test]
    fn relative_size_prompt() {
        let star = ObjectSpec::elementary(Shape::Star, Color::Yellow, Sheen::None, SizeClass::Small, Cell::new(0, 0).unwrap());
        let tri = ObjectSpec::elementary(Shape::Triangle, Color::Yellow, Sheen::None, SizeClass::Regular, Cell::new(5, 5).unwrap());
        let w = World::new(Setting::RelativeSize, vec![star, tri]).unwrap();
        let q = build_question(&w, Aspect::RelativeSize, 0).unwrap();
        assert!(q.text.contains("What is the size of the star with respect to the triangle?"));
        assert_eq!(q.ground_truth, "smaller");
    }

    #[test]
    fn shape_options_are_the_domain() {
        let q = build_question(&yellow_star_at(2, 2), Aspect::Shape, 11).unwrap();
        let set: HashSet<_> = q.options.iter().map(String::as_str).collect();
        assert_eq!(set, HashSet::from(["square", "circle", "triangle", "star"]));
        assert!(q.text.starts_with("Answer with as few words as possible. What is the shape of the object? Choose from ["));
    }

    #[test]
    fn option_set_sizes() {
        let w = yellow_star_at(1, 1);
        assert_eq!(option_set(Aspect::Sheen, &w).len(), 2);
        assert_eq!(option_set(Aspect::AbsolutePosition, &w).len(), 9);
        let rd = &world::enumerate_relative_distance(0).unwrap()[0];
        assert_eq!(option_set(Aspect::RelativeDistance, rd), vec!["triangle", "circle"]);
    }

    #[test]
    fn aspect_setting_mismatch() {
        let w = yellow_star_at(1, 1);
        assert!(build_question(&w, Aspect::RelativeSize, 0).is_err());
        // no-sheen objects are never asked about sheen
        assert!(build_question(&w, Aspect::Sheen, 0).is_err());
    }

    #[test]
    fn option_order_cycles_small_k() {
        let orders: Vec<_> = (0..4).map(|i| option_order(2, i)).collect();
        assert_eq!(orders, vec![vec![0, 1], vec![1, 0], vec![0, 1], vec![1, 0]]);
        assert_eq!(option_order(3, 0), vec![0, 1, 2]);
        assert_eq!(option_order(3, 5), vec![2, 1, 0]);
        assert_eq!(option_order(9, 42), option_order(9, 42));
        let mut seen = option_order(9, 42);
        seen.sort();
        assert_eq!(seen, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn four_option_orders_balance_over_single_object() {
        let qs = build_questions(&world::enumerate_single_object(), Aspect::Shape).unwrap();
        let mut counts: HashMap<Vec<String>, usize> = HashMap::new();
        for q in &qs {
            *counts.entry(q.options.clone()).or_default() += 1;
        }
        assert_eq!(counts.len(), 24);
        assert!(counts.values().all(|&c| c == 243));
    }

    #[test]
    fn prompts_match_grammar_and_oracle() {
        let pattern = Regex::new(r"^Answer with as few words as possible\. .* Choose from \[.*\]\.$").unwrap();
        for setting in [Setting::SingleObject, Setting::RelativePosition, Setting::RelativeDistance] {
            let worlds = world::enumerate(setting, SizeClass::Regular, 0).unwrap();
            for &aspect in aspects_for(setting) {
                for q in build_questions(&worlds, aspect).unwrap().iter().step_by(7) {
                    assert!(pattern.is_match(&q.text), "{}", q.text);
                    assert!(q.text.ends_with(&format!("Choose from [{}].", q.options.join(", "))));
                    assert!(q.options.contains(&q.ground_truth));
                    let distinct: HashSet<_> = q.options.iter().collect();
                    assert_eq!(distinct.len(), q.options.len());
                }
            }
        }
    }

    #[test]
    fn section_labels_balanced() {
        let qs = build_questions(&world::enumerate_single_object(), Aspect::AbsolutePosition).unwrap();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for q in &qs {
            *counts.entry(q.ground_truth.as_str()).or_default() += 1;
        }
        assert_eq!(counts.len(), 9);
        assert!(counts.values().all(|&c| c == 648));
    }
}
