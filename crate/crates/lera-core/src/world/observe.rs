//! Observations of a scene, in three formats.
//!
//! * `snapshot`: canonical pretty-printed JSON; equal scenes give
//!   byte-identical snapshots, and snapshots parse back into scenes.
//! * `text`: a deterministic natural-language description.
//! * `raster`: an RGB image of the table grid, one square per cell, for
//!   backends that take image input.

use serde::{Deserialize, Serialize};

use super::{Color, FlagName, ObjectId, ObjectKind, Placement, Scene, WorldError};

/// Default raster resolution, in pixels per table cell edge.
pub const DEFAULT_PX_PER_CELL: u32 = 16;

/// An RGB8 image of the table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB triples, `width * height * 3` bytes.
    pub pixels: Vec<u8>,
}

impl RasterImage {
    /// Encodes the image as a binary PPM (P6) file.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn media_type() -> &'static str {
        "image/x-portable-pixmap"
    }
}

/// Everything a replanning request may show the backend about the world.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub snapshot: String,
    pub text: String,
    pub raster: RasterImage,
}

impl Observation {
    pub fn capture(scene: &Scene) -> Observation {
        Observation {
            snapshot: scene.snapshot(),
            text: scene.describe(),
            raster: scene.rasterize(DEFAULT_PX_PER_CELL),
        }
    }
}

impl Scene {
    /// Canonical JSON snapshot: sorted object keys, fixed field order.
    pub fn snapshot(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenes always serialize")
    }

    /// Parses and validates a snapshot produced by [`Scene::snapshot`].
    pub fn from_snapshot(text: &str) -> Result<Scene, WorldError> {
        let scene: Scene = serde_json::from_str(text)
            .map_err(|e| WorldError::SnapshotParse(e.to_string()))?;
        scene
            .validate()
            .map_err(|e| WorldError::SnapshotParse(e.to_string()))?;
        Ok(scene)
    }

    /// Deterministic English description of the scene.
    pub fn describe(&self) -> String {
        let grid = grid_side(self.table_cells);
        let mut out = format!(
            "The table is a {grid}x{grid} grid of {} cells.\n",
            self.table_cells
        );
        if self.objects.is_empty() {
            out.push_str("The table is empty.\n");
        }
        for (id, object) in &self.objects {
            let mut line = format!("{id} ({}): {}", describe_kind(object), object.at);
            for (flag, yes, no) in [
                (FlagName::Open, "open", "closed"),
                (FlagName::Powered, "running", "off"),
                (FlagName::Hot, "hot", "cold"),
                (FlagName::Clean, "clean", "dirty"),
            ] {
                if let Some(value) = object.flags.get(flag) {
                    line.push_str("; ");
                    line.push_str(if value { yes } else { no });
                }
            }
            line.push_str(".\n");
            out.push_str(&line);
        }
        match &self.gripper {
            Some(id) => out.push_str(&format!("The gripper is holding {id}.\n")),
            None => out.push_str("The gripper is empty.\n"),
        }
        match &self.located {
            Some(id) => out.push_str(&format!("The robot last located {id}.\n")),
            None => out.push_str("Nothing has been located yet.\n"),
        }
        out
    }

    /// Renders the table as an RGB grid, `px_per_cell` pixels per cell edge.
    ///
    /// Ground objects fill their cell (bowls as a ring, containers and
    /// appliances as a box that is dark when closed, with a corner dot when
    /// running). Whatever sits in or on a ground object is drawn as nested
    /// inner squares. Held objects are not drawn; the gripper is not part of
    /// the table.
    pub fn rasterize(&self, px_per_cell: u32) -> RasterImage {
        let px = px_per_cell.max(4);
        let grid = grid_side(self.table_cells);
        let side = grid * px;
        let mut canvas = Canvas::new(side, side);

        for (id, object) in &self.objects {
            let Placement::OnTable(cell) = object.at else {
                continue;
            };
            let col = cell % grid;
            let row = cell / grid;
            let x0 = col * px;
            let y0 = row * px;
            match object.kind {
                ObjectKind::Block => {
                    canvas.fill(x0, y0, px, px, color_rgb(object.color));
                }
                ObjectKind::Bowl => {
                    let ring = (px / 5).max(2);
                    canvas.fill(x0, y0, px, px, color_rgb(object.color));
                    canvas.fill(
                        x0 + ring,
                        y0 + ring,
                        px - 2 * ring,
                        px - 2 * ring,
                        WHITE,
                    );
                }
                ObjectKind::Item => {
                    canvas.fill(x0, y0, px, px, ITEM_BROWN);
                }
                ObjectKind::Container | ObjectKind::Appliance => {
                    let open = object.flags.get(FlagName::Open) == Some(true);
                    let body = if open { GRAY_OPEN } else { GRAY_CLOSED };
                    canvas.fill(x0, y0, px, px, body);
                    if object.flags.get(FlagName::Powered) == Some(true) {
                        let dot = (px / 4).max(2);
                        canvas.fill(x0, y0, dot, dot, POWER_DARK);
                    }
                }
            }
            // Nested contents: first layer at half size, second at a quarter.
            let mut layer = 0u32;
            let mut base = id.clone();
            while layer < 2 {
                let Some(above) = self.stacked_or_contained(&base) else {
                    break;
                };
                layer += 1;
                let inset = px * layer / 4;
                let inner = px - 2 * inset;
                let rgb = match self.objects[&above].kind {
                    ObjectKind::Item => ITEM_BROWN,
                    _ => color_rgb(self.objects[&above].color),
                };
                canvas.fill(x0 + inset, y0 + inset, inner, inner, rgb);
                base = above;
            }
        }
        canvas.into_image()
    }

    /// The first object (in name order) directly in or on `base`.
    fn stacked_or_contained(&self, base: &ObjectId) -> Option<ObjectId> {
        self.objects
            .iter()
            .find(|(_, o)| {
                o.at == Placement::In(base.clone()) || o.at == Placement::On(base.clone())
            })
            .map(|(id, _)| id.clone())
    }
}

fn describe_kind(object: &super::SceneObject) -> String {
    if object.color.is_none() {
        object.kind.to_string()
    } else {
        format!("{} {}", object.color, object.kind)
    }
}

/// Side length of the smallest square grid covering `cells`.
pub fn grid_side(cells: u32) -> u32 {
    let mut side = 1;
    while side * side < cells {
        side += 1;
    }
    side
}

const WHITE: [u8; 3] = [255, 255, 255];
const ITEM_BROWN: [u8; 3] = [176, 137, 97];
const GRAY_OPEN: [u8; 3] = [200, 200, 200];
const GRAY_CLOSED: [u8; 3] = [105, 105, 105];
const POWER_DARK: [u8; 3] = [40, 40, 40];

fn color_rgb(color: Color) -> [u8; 3] {
    match color {
        Color::Red => [204, 41, 41],
        Color::Green => [45, 156, 66],
        Color::Blue => [46, 84, 204],
        Color::Yellow => [230, 199, 46],
        Color::None => [150, 150, 150],
    }
}

struct Canvas {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(width: u32, height: u32) -> Canvas {
        Canvas {
            width,
            height,
            pixels: WHITE.repeat((width * height) as usize),
        }
    }

    fn fill(&mut self, x0: u32, y0: u32, w: u32, h: u32, rgb: [u8; 3]) {
        for y in y0..(y0 + h).min(self.height) {
            for x in x0..(x0 + w).min(self.width) {
                let offset = ((y * self.width + x) * 3) as usize;
                self.pixels[offset..offset + 3].copy_from_slice(&rgb);
            }
        }
    }

    fn into_image(self) -> RasterImage {
        RasterImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels,
        }
    }
}
