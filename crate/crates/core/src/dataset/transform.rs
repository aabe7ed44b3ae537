use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Annotation, BoundingBox, Dataset, DatasetError, ImageRecord};

/// Exact, axis-aligned augmentation. Rotations are clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    HorizontalFlip,
    VerticalFlip,
    Rotate90,
    Rotate180,
    Rotate270,
}

impl Transform {
    pub const ALL: [Transform; 5] = [
        Transform::HorizontalFlip,
        Transform::VerticalFlip,
        Transform::Rotate90,
        Transform::Rotate180,
        Transform::Rotate270,
    ];

    pub fn swaps_dimensions(self) -> bool {
        matches!(self, Transform::Rotate90 | Transform::Rotate270)
    }

    /// Maps one box living in a `width x height` image.
    pub fn apply_to_box(self, b: &BoundingBox, width: f64, height: f64) -> BoundingBox {
        let (x, y, w, h) = (b.x(), b.y(), b.width(), b.height());
        let (nx, ny, nw, nh) = match self {
            Transform::HorizontalFlip => (width - x - w, y, w, h),
            Transform::VerticalFlip => (x, height - y - h, w, h),
            Transform::Rotate90 => (height - y - h, x, h, w),
            Transform::Rotate180 => (width - x - w, height - y - h, w, h),
            Transform::Rotate270 => (y, width - x - w, h, w),
        };
        BoundingBox::new(nx.max(0.0), ny.max(0.0), nw, nh).expect("size is preserved")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedImage {
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<Annotation>,
}

/// Applies `transform` to the annotations of one image.
///
/// Boxes are first clipped to the image; boxes lying entirely outside it are
/// dropped.
pub fn augment(
    annotations: &[Annotation],
    image_w: u32,
    image_h: u32,
    transform: Transform,
) -> AugmentedImage {
    let (w, h) = (f64::from(image_w), f64::from(image_h));
    let annotations = annotations
        .iter()
        .filter_map(|a| {
            let clipped = a.bbox.clamp_to(w, h)?;
            Some(Annotation {
                bbox: transform.apply_to_box(&clipped, w, h),
                ..a.clone()
            })
        })
        .collect();
    let (width, height) = if transform.swaps_dimensions() {
        (image_h, image_w)
    } else {
        (image_w, image_h)
    };
    AugmentedImage {
        width,
        height,
        annotations,
    }
}

/// Picks one random flip or rotation per image (seeded) and applies it.
pub fn random_augmentation(dataset: &Dataset, seed: u64) -> (Dataset, Vec<(u64, Transform)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_image = dataset.annotations_by_image();
    let mut images = Vec::with_capacity(dataset.images().len());
    let mut annotations = Vec::with_capacity(dataset.annotations().len());
    let mut applied = Vec::with_capacity(dataset.images().len());

    for image in dataset.images() {
        let t = *Transform::ALL.choose(&mut rng).expect("non-empty");
        let anns: Vec<Annotation> = by_image
            .get(&image.id)
            .map(|v| v.iter().map(|a| (*a).clone()).collect())
            .unwrap_or_default();
        let out = augment(&anns, image.width, image.height, t);
        images.push(ImageRecord {
            width: out.width,
            height: out.height,
            ..image.clone()
        });
        annotations.extend(out.annotations);
        applied.push((image.id, t));
    }

    let augmented = Dataset::new(images, annotations, dataset.categories().to_vec())
        .expect("augmentation keeps referential integrity");
    (augmented, applied)
}

/// Intensity normalization recorded alongside a resize. No pixels are read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelNormalization {
    pub divisor: f64,
    pub range: (f64, f64),
}

impl Default for PixelNormalization {
    fn default() -> Self {
        Self {
            divisor: 255.0,
            range: (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResizePlan {
    pub scale_x: f64,
    pub scale_y: f64,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<Annotation>,
    pub normalization: PixelNormalization,
}

/// Plans a resize of an `image_w x image_h` image to a `target_side` square.
pub fn resize_plan(
    image_w: u32,
    image_h: u32,
    target_side: u32,
    annotations: &[Annotation],
) -> Result<ResizePlan, DatasetError> {
    if image_w == 0 || image_h == 0 || target_side == 0 {
        return Err(DatasetError::ZeroDimension);
    }
    let target = f64::from(target_side);
    let scale_x = target / f64::from(image_w);
    let scale_y = target / f64::from(image_h);
    let annotations = annotations
        .iter()
        .map(|a| {
            let b = &a.bbox;
            let bbox = BoundingBox::new(
                b.x() * scale_x,
                b.y() * scale_y,
                b.width() * scale_x,
                b.height() * scale_y,
            )
            .map_err(|_| DatasetError::DegenerateBox { annotation_id: a.id })?;
            Ok(Annotation { bbox, ..a.clone() })
        })
        .collect::<Result<_, DatasetError>>()?;
    Ok(ResizePlan {
        scale_x,
        scale_y,
        width: target_side,
        height: target_side,
        annotations,
        normalization: PixelNormalization::default(),
    })
}
