//! Synthetic desk-scale benchmark with oracle fixtures.
//!
//! Every category shows a flat-coloured object on a grey table. Fixtures
//! pair each true defect with three kinds of distractor the baseline falls
//! for:
//!
//! * out-of-object: a salient stain on the table, strong detector score;
//! * oversized: a box covering most of the object;
//! * low-saliency: object-coloured patches (wick-like) that the detector
//!   scores above the real defect.
//!
//! One image per category carries five true defects plus a sixth
//! mid-scoring candidate that only top-K selection removes. Some defects
//! answer only to the class-specific prompt.

use std::path::Path;

use image::RgbImage;

use crate::backends::oracle::{FixtureEntry, OracleFixture};
use crate::error::{Error, Result};
use crate::eval::manifest::{ManifestDocument, ManifestEntry, Split, NO_GROUND_TRUTH};
use crate::geometry::Mask;
use crate::image::mask_to_png;
use crate::profile::{ProfileDocument, ProfileOverride, PromptProfile};

pub const RESOLUTION: usize = 400;
pub const DATASET_NAME: &str = "desk";
pub const IMAGES_PER_CATEGORY: usize = 6;

const TABLE: [f32; 3] = [0.5, 0.5, 0.5];
const OBJECT_RECT: (usize, usize, usize, usize) = (60, 80, 340, 320);

struct Palette {
    category: &'static str,
    defect_phrase: &'static str,
    object: [f32; 3],
    defect: [f32; 3],
}

const PALETTES: [Palette; 3] = [
    Palette {
        category: "candle",
        defect_phrase: "burn mark",
        object: [0.86, 0.82, 0.7],
        defect: [0.9, 0.1, 0.08],
    },
    Palette {
        category: "capsule",
        defect_phrase: "crack",
        object: [0.62, 0.66, 0.76],
        defect: [0.1, 0.8, 0.15],
    },
    Palette {
        category: "pcb",
        defect_phrase: "scratch",
        object: [0.55, 0.64, 0.55],
        defect: [0.12, 0.15, 0.9],
    },
];

#[derive(Clone, Copy)]
enum Shape {
    Rect(usize, usize, usize, usize),
    Disk(usize, usize, usize),
}

impl Shape {
    fn mask(self) -> Mask {
        match self {
            Shape::Rect(x0, y0, x1, y1) => {
                Mask::from_fn(RESOLUTION, RESOLUTION, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
            }
            Shape::Disk(cx, cy, r) => Mask::from_fn(RESOLUTION, RESOLUTION, |x, y| {
                let (dx, dy) = (x as i64 - cx as i64, y as i64 - cy as i64);
                dx * dx + dy * dy <= (r * r) as i64
            }),
        }
    }

    fn shifted(self, dx: i64, dy: i64) -> Shape {
        let s = |v: usize, d: i64| (v as i64 + d) as usize;
        match self {
            Shape::Rect(x0, y0, x1, y1) => Shape::Rect(s(x0, dx), s(y0, dy), s(x1, dx), s(y1, dy)),
            Shape::Disk(cx, cy, r) => Shape::Disk(s(cx, dx), s(cy, dy), r),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Defect,
    Distractor,
    Object,
}

struct Region {
    phrase: String,
    score: f64,
    shape: Shape,
    role: Role,
    /// Pixel colour painted for this region, if any.
    paint: Option<[f32; 3]>,
    /// Rectangles are left to the refiner's box rasterization.
    ship_mask: bool,
}

fn darker(c: [f32; 3], f: f32) -> [f32; 3] {
    [c[0] * f, c[1] * f, c[2] * f]
}

fn region(phrase: &str, score: f64, shape: Shape, role: Role, paint: Option<[f32; 3]>) -> Region {
    Region {
        phrase: phrase.to_string(),
        score,
        shape,
        role,
        paint,
        ship_mask: matches!(shape, Shape::Disk(..)) || role == Role::Object,
    }
}

/// Regions of image `index` in a category.
fn layout(p: &Palette, index: usize) -> Vec<Region> {
    const OFFSETS: [(i64, i64); IMAGES_PER_CATEGORY] = [(0, 0), (20, 10), (-10, 20), (0, 0), (10, -10), (-20, 0)];
    let (dx, dy) = OFFSETS[index];
    let (ox0, oy0, ox1, oy1) = OBJECT_RECT;
    let wick = darker(p.object, 0.7);
    let object = region(p.category, 0.9, Shape::Rect(ox0, oy0, ox1, oy1), Role::Object, Some(p.object));
    let defect = |phrase: &str, score: f64| {
        region(phrase, score, Shape::Disk(150, 170, 40).shifted(dx, dy), Role::Defect, Some(p.defect))
    };
    let low_saliency = |score: f64, shape: Shape| region("anomaly", score, shape.shifted(dx, dy), Role::Distractor, Some(wick));
    let out_of_object = || region("anomaly", 0.7, Shape::Disk(32, 360, 24), Role::Distractor, Some(p.defect));
    let oversized = || region("anomaly", 0.8, Shape::Rect(80, 100, 320, 300), Role::Distractor, None);

    let mut regions = vec![object];
    match index {
        // The baseline's false-alarm case: the naive prompt finds the
        // defect and every distractor, all of which outscore it.
        0 => {
            regions.push(defect("anomaly", 0.45));
            regions.push(low_saliency(0.5, Shape::Rect(250, 110, 270, 190)));
            regions.push(low_saliency(0.5, Shape::Rect(290, 210, 310, 290)));
            regions.push(out_of_object());
            regions.push(oversized());
        }
        1 => {
            regions.push(defect(p.defect_phrase, 0.45));
            regions.push(low_saliency(0.5, Shape::Rect(250, 110, 270, 190)));
            regions.push(out_of_object());
        }
        2 => {
            regions.push(defect("defect", 0.5));
            regions.push(low_saliency(0.5, Shape::Rect(270, 200, 290, 280)));
            regions.push(oversized());
        }
        3 => {
            let phrases = [p.defect_phrase, "anomaly", "defect", p.defect_phrase, "anomaly"];
            let centers = [(110, 130), (200, 130), (110, 250), (200, 250), (260, 170)];
            for (phrase, (cx, cy)) in phrases.iter().zip(centers) {
                regions.push(region(phrase, 0.7, Shape::Disk(cx, cy, 26), Role::Defect, Some(p.defect)));
            }
            regions.push(region(
                "anomaly",
                0.72,
                Shape::Rect(270, 240, 320, 300),
                Role::Distractor,
                Some(darker(p.object, 0.75)),
            ));
        }
        4 => {
            regions.push(low_saliency(0.5, Shape::Rect(250, 110, 270, 190)));
            regions.push(out_of_object());
        }
        _ => {
            regions.push(defect(p.defect_phrase, 0.45));
            regions.push(out_of_object());
            regions.push(oversized());
        }
    }
    regions
}

pub struct DeskImage {
    pub entry: ManifestEntry,
    pub pixels: RgbImage,
    pub ground_truth: Option<Mask>,
}

pub struct DeskDataset {
    pub images: Vec<DeskImage>,
    pub fixture: OracleFixture,
    pub profile: ProfileDocument,
}

fn to_u8(c: [f32; 3]) -> image::Rgb<u8> {
    image::Rgb(c.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8))
}

pub fn categories() -> Vec<&'static str> {
    PALETTES.iter().map(|p| p.category).collect()
}

/// The full-model profile, with per-category object and defect prompts.
pub fn profile() -> ProfileDocument {
    let mut base = PromptProfile::new("object");
    base.theta_iou = 0.9;
    base.theta_area = 0.3;
    let mut doc = ProfileDocument::new("desk", "Desk benchmark", base);
    for p in &PALETTES {
        doc.categories.insert(
            p.category.to_string(),
            ProfileOverride {
                object_prompt: Some(p.category.to_string()),
                class_specific_prompts: Some(vec![p.defect_phrase.to_string()]),
                ..Default::default()
            },
        );
    }
    doc
}

pub fn generate() -> DeskDataset {
    let mut images = Vec::new();
    let mut fixture = OracleFixture::new();
    for p in &PALETTES {
        for index in 0..IMAGES_PER_CATEGORY {
            let id = format!("{}_{index:03}", p.category);
            let regions = layout(p, index);
            let mut pixels = RgbImage::from_pixel(RESOLUTION as u32, RESOLUTION as u32, to_u8(TABLE));
            let mut gt = Mask::empty(RESOLUTION, RESOLUTION);
            let mut entries = Vec::new();
            for r in &regions {
                let mask = r.shape.mask();
                if let Some(c) = r.paint {
                    let c = to_u8(c);
                    for y in 0..RESOLUTION {
                        for x in 0..RESOLUTION {
                            if mask.get(x, y) {
                                pixels.put_pixel(x as u32, y as u32, c);
                            }
                        }
                    }
                }
                if r.role == Role::Defect {
                    gt = gt.union(&mask).expect("same shape");
                }
                let (x0, y0, x1, y1) = mask.bounding_box().expect("nonempty region");
                entries.push(FixtureEntry {
                    phrase: r.phrase.clone(),
                    bbox: [x0, y0, x1, y1],
                    score: r.score,
                    mask: r.ship_mask.then_some(mask),
                });
            }
            fixture.images.insert(id.clone(), entries);
            let normal = gt.is_empty();
            let kind = if normal { "good" } else { "defect" };
            images.push(DeskImage {
                entry: ManifestEntry {
                    id,
                    category: p.category.to_string(),
                    split: Split::Test,
                    image: format!("{}/test/{kind}/{index:03}.png", p.category).into(),
                    ground_truth: if normal {
                        NO_GROUND_TRUTH.to_string()
                    } else {
                        format!("{}/ground_truth/{kind}/{index:03}_mask.png", p.category)
                    },
                },
                pixels,
                ground_truth: (!normal).then_some(gt),
            });
        }
    }
    DeskDataset {
        images,
        fixture,
        profile: profile(),
    }
}

impl DeskDataset {
    pub fn manifest(&self) -> ManifestDocument {
        ManifestDocument::new(DATASET_NAME, ".", self.images.iter().map(|i| i.entry.clone()).collect())
    }

    /// Writes images, masks, `manifest.json`, `fixtures.json` and
    /// `profile.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mkdirs = |p: &Path| -> Result<()> {
            let parent = p.parent().expect("relative path has a parent");
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))
        };
        for img in &self.images {
            let path = dir.join(&img.entry.image);
            mkdirs(&path)?;
            let mut png = Vec::new();
            img.pixels
                .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
                .map_err(|e| Error::Codec(e.to_string()))?;
            std::fs::write(&path, png).map_err(|e| Error::io(&path, e))?;
            if let Some(gt) = &img.ground_truth {
                let path = dir.join(&img.entry.ground_truth);
                mkdirs(&path)?;
                std::fs::write(&path, mask_to_png(gt)?).map_err(|e| Error::io(&path, e))?;
            }
        }
        let write = |name: &str, text: String| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        write("manifest.json", self.manifest().to_json())?;
        write("fixtures.json", self.fixture.to_json())?;
        write("profile.json", self.profile.to_json_pretty())?;
        Ok(())
    }
}
