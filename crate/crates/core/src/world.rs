//! Domain types for stimulus worlds and the exhaustive enumerations of the
//! five experimental settings, together with the ground-truth oracles for
//! sections and object relations.
//!
//! Every enumeration is a pure function of its arguments. Canonical orders are
//! fixed so that world ids (and everything keyed on them) are stable.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, invalid};

/// Side length of the grid, in cells.
pub const GRID_DIM: u8 = 9;

/// Number of scenes sampled for each section assignment in the relative
/// distance setting.
pub const DISTANCE_SAMPLES_PER_ASSIGNMENT: usize = 6;

const DISTANCE_MAX_ATTEMPTS: usize = 10_000;

/// A closed set of named values that double as answer options.
pub trait Vocabulary: Copy + Eq + Sized + 'static {
    const ALL: &'static [Self];

    fn as_str(self) -> &'static str;

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.as_str() == s)
    }

    fn index(self) -> usize {
        Self::ALL.iter().position(|v| *v == self).unwrap()
    }
}

macro_rules! vocabulary {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl Vocabulary for $name {
            const ALL: &'static [Self] = &[$(Self::$variant),+];

            fn as_str(self) -> &'static str {
                match self {
                    $(Self::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

vocabulary!(Shape {
    Square => "square",
    Circle => "circle",
    Triangle => "triangle",
    Star => "star",
});

vocabulary!(Color {
    Red => "red",
    Green => "green",
    Blue => "blue",
    Cyan => "cyan",
    Magenta => "magenta",
    Yellow => "yellow",
});

impl Color {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [255, 0, 0],
            Color::Green => [0, 255, 0],
            Color::Blue => [0, 0, 255],
            Color::Cyan => [0, 255, 255],
            Color::Magenta => [255, 0, 255],
            Color::Yellow => [255, 255, 0],
        }
    }
}

vocabulary!(Sheen {
    None => "none",
    Matte => "matte",
    Glossy => "glossy",
});

vocabulary!(
    /// Small objects span half the width and half the height of regular ones.
    SizeClass {
        Regular => "regular",
        Small => "small",
    }
);

vocabulary!(Category {
    Giraffe => "giraffe",
    Elephant => "elephant",
    Zebra => "zebra",
});

vocabulary!(
    /// The nine 3x3 blocks of the grid, listed top-to-bottom, left-to-right.
    SectionLabel {
        TopLeft => "top left",
        TopCenter => "top center",
        TopRight => "top right",
        CenterLeft => "center left",
        Center => "center",
        CenterRight => "center right",
        BottomLeft => "bottom left",
        BottomCenter => "bottom center",
        BottomRight => "bottom right",
    }
);

vocabulary!(RelPosLabel {
    DirectlyAbove => "directly above",
    DirectlyLeft => "directly left",
    DirectlyRight => "directly right",
    DirectlyBelow => "directly below",
    AboveLeft => "above left",
    AboveRight => "above right",
    BottomLeft => "bottom left",
    BottomRight => "bottom right",
});

impl RelPosLabel {
    /// The label seen from the other object (rotated by 180 degrees).
    pub fn opposite(self) -> Self {
        use RelPosLabel::*;
        match self {
            DirectlyAbove => DirectlyBelow,
            DirectlyBelow => DirectlyAbove,
            DirectlyLeft => DirectlyRight,
            DirectlyRight => DirectlyLeft,
            AboveLeft => BottomRight,
            BottomRight => AboveLeft,
            AboveRight => BottomLeft,
            BottomLeft => AboveRight,
        }
    }
}

vocabulary!(RelSizeLabel {
    Smaller => "smaller",
    Same => "same",
    Larger => "larger",
});

vocabulary!(Setting {
    SingleObject => "single_object",
    SingleObjectCoco => "single_object_coco",
    RelativePosition => "relative_position",
    RelativeSize => "relative_size",
    RelativeDistance => "relative_distance",
});

impl Setting {
    pub fn object_count(self) -> usize {
        match self {
            Setting::SingleObject | Setting::SingleObjectCoco => 1,
            Setting::RelativePosition | Setting::RelativeSize => 2,
            Setting::RelativeDistance => 3,
        }
    }

    /// Short prefix used in world ids.
    pub fn code(self) -> &'static str {
        match self {
            Setting::SingleObject => "so",
            Setting::SingleObjectCoco => "coco",
            Setting::RelativePosition => "rp",
            Setting::RelativeSize => "rs",
            Setting::RelativeDistance => "rd",
        }
    }

    fn uses_sprites(self) -> bool {
        self == Setting::SingleObjectCoco
    }
}

/// A grid cell; row 0 is the top row and col 0 the leftmost column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Cell {
    row: u8,
    col: u8,
}

impl Cell {
    pub fn new(row: u8, col: u8) -> Result<Self> {
        if row >= GRID_DIM || col >= GRID_DIM {
            return Err(invalid(format!("cell ({row},{col}) is outside the {GRID_DIM}x{GRID_DIM} grid")));
        }
        Ok(Cell { row, col })
    }

    pub fn row(self) -> u8 {
        self.row
    }

    pub fn col(self) -> u8 {
        self.col
    }

    /// Row-major index in `0..81`.
    pub fn index(self) -> usize {
        self.row as usize * GRID_DIM as usize + self.col as usize
    }

    /// All 81 cells in row-major order.
    pub fn all() -> impl Iterator<Item = Cell> + Clone {
        (0..GRID_DIM).flat_map(|row| (0..GRID_DIM).map(move |col| Cell { row, col }))
    }

    pub fn is_corner(self) -> bool {
        let edge = |v: u8| v == 0 || v == GRID_DIM - 1;
        edge(self.row) && edge(self.col)
    }

    /// Squared Euclidean distance between cell centers, in cell units.
    pub fn distance_sq(self, other: Cell) -> u32 {
        let dr = self.row as i32 - other.row as i32;
        let dc = self.col as i32 - other.col as i32;
        (dr * dr + dc * dc) as u32
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            row: u8,
            col: u8,
        }
        let raw = Raw::deserialize(d)?;
        Cell::new(raw.row, raw.col).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}c{}", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectKind {
    Elementary { shape: Shape, color: Color, sheen: Sheen },
    Sprite { category: Category },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectSpec {
    #[serde(flatten)]
    pub kind: ObjectKind,
    pub size: SizeClass,
    pub cell: Cell,
}

impl ObjectSpec {
    pub fn elementary(shape: Shape, color: Color, sheen: Sheen, size: SizeClass, cell: Cell) -> Self {
        ObjectSpec {
            kind: ObjectKind::Elementary { shape, color, sheen },
            size,
            cell,
        }
    }

    pub fn sprite(category: Category, size: SizeClass, cell: Cell) -> Self {
        ObjectSpec {
            kind: ObjectKind::Sprite { category },
            size,
            cell,
        }
    }

    pub fn shape(&self) -> Option<Shape> {
        match self.kind {
            ObjectKind::Elementary { shape, .. } => Some(shape),
            ObjectKind::Sprite { .. } => None,
        }
    }

    pub fn color(&self) -> Option<Color> {
        match self.kind {
            ObjectKind::Elementary { color, .. } => Some(color),
            ObjectKind::Sprite { .. } => None,
        }
    }

    pub fn sheen(&self) -> Option<Sheen> {
        match self.kind {
            ObjectKind::Elementary { sheen, .. } => Some(sheen),
            ObjectKind::Sprite { .. } => None,
        }
    }

    pub fn category(&self) -> Option<Category> {
        match self.kind {
            ObjectKind::Sprite { category } => Some(category),
            ObjectKind::Elementary { .. } => None,
        }
    }

    /// How the object is referred to in questions: "<sheen> <color> <shape>",
    /// with the sheen word dropped for unsheened objects.
    pub fn description(&self) -> String {
        match self.kind {
            ObjectKind::Elementary { shape, color, sheen: Sheen::None } => format!("{color} {shape}"),
            ObjectKind::Elementary { shape, color, sheen } => format!("{sheen} {color} {shape}"),
            ObjectKind::Sprite { category } => category.to_string(),
        }
    }

    fn id_code(&self) -> String {
        let mut code = match self.kind {
            ObjectKind::Elementary { shape, color, sheen } => format!("{shape}-{color}-{sheen}"),
            ObjectKind::Sprite { category } => category.to_string(),
        };
        if self.size == SizeClass::Small {
            code.push_str("-small");
        }
        code.push('-');
        code.push_str(&self.cell.to_string());
        code
    }
}

/// One stimulus world: a fixed 9x9 grid holding one to three objects.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct World {
    world_id: String,
    setting: Setting,
    grid_dim: u8,
    objects: Vec<ObjectSpec>,
}

impl World {
    pub fn new(setting: Setting, objects: Vec<ObjectSpec>) -> Result<Self> {
        if objects.len() != setting.object_count() {
            return Err(invalid(format!(
                "{setting} worlds hold {} objects, got {}",
                setting.object_count(),
                objects.len()
            )));
        }
        let mut cells = HashSet::new();
        for obj in &objects {
            if !cells.insert(obj.cell) {
                return Err(invalid(format!("two objects share cell {}", obj.cell)));
            }
            if setting.uses_sprites() != obj.category().is_some() {
                return Err(invalid(format!("object kind does not match setting {setting}")));
            }
        }
        let world_id = std::iter::once(setting.code().to_string())
            .chain(objects.iter().map(ObjectSpec::id_code))
            .collect::<Vec<_>>()
            .join("-");
        Ok(World {
            world_id,
            setting,
            grid_dim: GRID_DIM,
            objects,
        })
    }

    pub fn id(&self) -> &str {
        &self.world_id
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn grid_dim(&self) -> u8 {
        self.grid_dim
    }

    pub fn objects(&self) -> &[ObjectSpec] {
        &self.objects
    }

    /// The first (for single-object worlds, the only) object.
    pub fn primary(&self) -> &ObjectSpec {
        &self.objects[0]
    }

    /// Rebuild the world with every object set to `size`.
    pub fn with_size(&self, size: SizeClass) -> Result<World> {
        let objects = self.objects.iter().map(|o| ObjectSpec { size, ..*o }).collect();
        World::new(self.setting, objects)
    }
}

impl<'de> Deserialize<'de> for World {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            world_id: String,
            setting: Setting,
            grid_dim: u8,
            objects: Vec<ObjectSpec>,
        }
        let raw = Raw::deserialize(d)?;
        if raw.grid_dim != GRID_DIM {
            return Err(serde::de::Error::custom(format!("unsupported grid dimension {}", raw.grid_dim)));
        }
        let world = World::new(raw.setting, raw.objects).map_err(serde::de::Error::custom)?;
        if world.world_id != raw.world_id {
            return Err(serde::de::Error::custom(format!(
                "world id {} does not match content ({})",
                raw.world_id, world.world_id
            )));
        }
        Ok(world)
    }
}

/// Every (shape, color, sheen, cell) combination: 4 * 6 * 3 * 81 = 5,832 worlds.
pub fn enumerate_single_object() -> Vec<World> {
    let mut worlds = Vec::with_capacity(5_832);
    for &shape in Shape::ALL {
        for &color in Color::ALL {
            for &sheen in Sheen::ALL {
                for cell in Cell::all() {
                    let obj = ObjectSpec::elementary(shape, color, sheen, SizeClass::Regular, cell);
                    worlds.push(World::new(Setting::SingleObject, vec![obj]).expect("single object world"));
                }
            }
        }
    }
    worlds
}

/// One world per (category, cell); category-major in the given order.
pub fn enumerate_single_object_coco(categories: &[Category]) -> Result<Vec<World>> {
    if categories.is_empty() {
        return Err(invalid("at least one category is required"));
    }
    let mut seen = HashSet::new();
    for c in categories {
        if !seen.insert(c) {
            return Err(invalid(format!("duplicate category {c}")));
        }
    }
    Ok(categories
        .iter()
        .flat_map(|&category| {
            Cell::all().map(move |cell| {
                let obj = ObjectSpec::sprite(category, SizeClass::Regular, cell);
                World::new(Setting::SingleObjectCoco, vec![obj]).expect("sprite world")
            })
        })
        .collect())
}

fn distinct_cell_pairs() -> impl Iterator<Item = (Cell, Cell)> {
    Cell::all().flat_map(|a| Cell::all().filter(move |b| *b != a).map(move |b| (a, b)))
}

fn yellow(shape: Shape, size: SizeClass, cell: Cell) -> ObjectSpec {
    ObjectSpec::elementary(shape, Color::Yellow, Sheen::None, size, cell)
}

/// A yellow star and a yellow triangle in every ordered pair of distinct
/// cells: 81 * 80 = 6,480 worlds.
pub fn enumerate_relative_position() -> Vec<World> {
    distinct_cell_pairs()
        .map(|(star, triangle)| {
            let objects = vec![
                yellow(Shape::Star, SizeClass::Regular, star),
                yellow(Shape::Triangle, SizeClass::Regular, triangle),
            ];
            World::new(Setting::RelativePosition, objects).expect("relative position world")
        })
        .collect()
}

/// The four (star size, triangle size) pairings, each in every ordered pair
/// of distinct cells: 4 * 6,480 = 25,920 worlds.
pub fn enumerate_relative_size() -> Vec<World> {
    let mut worlds = Vec::with_capacity(25_920);
    for &star_size in SizeClass::ALL {
        for &triangle_size in SizeClass::ALL {
            for (star, triangle) in distinct_cell_pairs() {
                let objects = vec![
                    yellow(Shape::Star, star_size, star),
                    yellow(Shape::Triangle, triangle_size, triangle),
                ];
                worlds.push(World::new(Setting::RelativeSize, objects).expect("relative size world"));
            }
        }
    }
    worlds
}

/// A yellow star, triangle and circle, each assigned to one of the nine
/// sections (9^3 assignments), with six scenes per assignment whose cells are
/// drawn uniformly within the assigned sections.
///
/// Each assignment draws from its own ChaCha stream, so scenes depend only on
/// `(seed, assignment)`. A draw is rejected and redrawn whole when two objects
/// collide, when the star is equidistant from the other two, or when it
/// repeats a scene already drawn for the same assignment.
pub fn enumerate_relative_distance(seed: u64) -> Result<Vec<World>> {
    let sections = SectionLabel::ALL;
    let mut worlds = Vec::with_capacity(4_374);
    let mut assignment = 0u64;
    for &star_sec in sections {
        for &triangle_sec in sections {
            for &circle_sec in sections {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(assignment);
                let mut drawn: HashSet<[Cell; 3]> = HashSet::new();
                while drawn.len() < DISTANCE_SAMPLES_PER_ASSIGNMENT {
                    let cells = draw_distance_scene(&mut rng, [star_sec, triangle_sec, circle_sec], &drawn)
                        .ok_or_else(|| {
                            Error::Generation(format!(
                                "no valid scene for sections ({star_sec}, {triangle_sec}, {circle_sec}) after {DISTANCE_MAX_ATTEMPTS} draws"
                            ))
                        })?;
                    drawn.insert(cells);
                    let objects = vec![
                        yellow(Shape::Star, SizeClass::Regular, cells[0]),
                        yellow(Shape::Triangle, SizeClass::Regular, cells[1]),
                        yellow(Shape::Circle, SizeClass::Regular, cells[2]),
                    ];
                    worlds.push(World::new(Setting::RelativeDistance, objects)?);
                }
                assignment += 1;
            }
        }
    }
    Ok(worlds)
}

fn draw_distance_scene(
    rng: &mut ChaCha8Rng,
    sections: [SectionLabel; 3],
    drawn: &HashSet<[Cell; 3]>,
) -> Option<[Cell; 3]> {
    for _ in 0..DISTANCE_MAX_ATTEMPTS {
        let cells = sections.map(|s| {
            let (row_band, col_band) = s.bands();
            let row = row_band * 3 + rng.random_range(0..3u8);
            let col = col_band * 3 + rng.random_range(0..3u8);
            Cell { row, col }
        });
        let [star, triangle, circle] = cells;
        if star == triangle || star == circle || triangle == circle {
            continue;
        }
        if star.distance_sq(triangle) == star.distance_sq(circle) {
            continue;
        }
        if drawn.contains(&cells) {
            continue;
        }
        return Some(cells);
    }
    None
}

/// Enumerate a setting with the given object size class. Relative size fixes
/// its own sizes and rejects `Small`.
pub fn enumerate(setting: Setting, size: SizeClass, seed: u64) -> Result<Vec<World>> {
    let worlds = match setting {
        Setting::SingleObject => enumerate_single_object(),
        Setting::SingleObjectCoco => enumerate_single_object_coco(Category::ALL)?,
        Setting::RelativePosition => enumerate_relative_position(),
        Setting::RelativeSize => {
            if size != SizeClass::Regular {
                return Err(Error::Config("relative_size varies object sizes itself".into()));
            }
            return Ok(enumerate_relative_size());
        }
        Setting::RelativeDistance => enumerate_relative_distance(seed)?,
    };
    match size {
        SizeClass::Regular => Ok(worlds),
        SizeClass::Small => worlds.iter().map(|w| w.with_size(size)).collect(),
    }
}

impl SectionLabel {
    /// (row band, column band), each in `0..3`.
    pub fn bands(self) -> (u8, u8) {
        let i = self.index() as u8;
        (i / 3, i % 3)
    }

    pub fn from_bands(row_band: u8, col_band: u8) -> Self {
        Self::ALL[row_band as usize * 3 + col_band as usize]
    }

    pub fn cells(self) -> impl Iterator<Item = Cell> {
        let (rb, cb) = self.bands();
        (0..3).flat_map(move |r| (0..3).map(move |c| Cell { row: rb * 3 + r, col: cb * 3 + c }))
    }
}

pub fn section_of(cell: Cell) -> SectionLabel {
    SectionLabel::from_bands(cell.row / 3, cell.col / 3)
}

/// Where `subject` lies with respect to `reference`.
pub fn relative_position_of(subject: Cell, reference: Cell) -> Result<RelPosLabel> {
    use std::cmp::Ordering::*;
    use RelPosLabel::*;
    let label = match (subject.row.cmp(&reference.row), subject.col.cmp(&reference.col)) {
        (Equal, Equal) => return Err(invalid(format!("subject and reference share cell {subject}"))),
        (Less, Equal) => DirectlyAbove,
        (Greater, Equal) => DirectlyBelow,
        (Equal, Less) => DirectlyLeft,
        (Equal, Greater) => DirectlyRight,
        (Less, Less) => AboveLeft,
        (Less, Greater) => AboveRight,
        (Greater, Less) => BottomLeft,
        (Greater, Greater) => BottomRight,
    };
    Ok(label)
}

/// The object in `others` whose cell center is nearest to `target`'s.
pub fn closest_object<'a>(target: &ObjectSpec, others: &'a [ObjectSpec]) -> Result<&'a ObjectSpec> {
    let mut best: Option<(&ObjectSpec, u32)> = None;
    let mut tied = false;
    for other in others {
        let d = target.cell.distance_sq(other.cell);
        match best {
            None => best = Some((other, d)),
            Some((_, bd)) if d < bd => {
                best = Some((other, d));
                tied = false;
            }
            Some((_, bd)) if d == bd => tied = true,
            _ => {}
        }
    }
    let (obj, _) = best.ok_or_else(|| invalid("closest_object needs at least one candidate"))?;
    if tied {
        return Err(Error::Ambiguous(format!(
            "several objects are equally close to the object at {}",
            target.cell
        )));
    }
    Ok(obj)
}

pub fn relative_size_of(subject: SizeClass, reference: SizeClass) -> RelSizeLabel {
    match (subject, reference) {
        (SizeClass::Small, SizeClass::Regular) => RelSizeLabel::Smaller,
        (SizeClass::Regular, SizeClass::Small) => RelSizeLabel::Larger,
        _ => RelSizeLabel::Same,
    }
}
