use std::collections::HashSet;

use ewaste_core::dataset::{
    augment, emit_coco, parse_coco, stratified_split, Annotation, BoundingBox, CategoryLabel,
    Dataset, ImageRecord, SplitConfig, Transform,
};
use proptest::prelude::*;

const FIXTURE: &str = include_str!("fixtures/three_images.coco.json");

#[test]
fn fixture_counts_and_canonical_reserialization() {
    let d = parse_coco(FIXTURE.as_bytes()).unwrap();
    assert_eq!(
        (d.images().len(), d.annotations().len(), d.categories().len()),
        (3, 5, 2)
    );
    assert_eq!(emit_coco(&d), FIXTURE);
}

#[test]
fn hundred_image_fixture_splits_forty_forty() {
    let d = balanced(50, 50);
    let cfg = SplitConfig { train_fraction: 0.8, seed: 2024, strict: true };
    let (train, test) = stratified_split(&d, &cfg).unwrap();
    let count = |ds: &Dataset, cat| ds.annotations().iter().filter(|a| a.category_id == cat).count();
    assert_eq!((count(&train, 1), count(&train, 2)), (40, 40));
    assert_eq!((count(&test, 1), count(&test, 2)), (10, 10));
    assert_eq!(stratified_split(&d, &cfg).unwrap(), (train, test));
}

fn balanced(a: usize, b: usize) -> Dataset {
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    for (cat, n) in [(1u32, a), (2u32, b)] {
        for _ in 0..n {
            let id = images.len() as u64 + 1;
            images.push(ImageRecord { id, file_name: format!("{id}.jpg"), width: 100, height: 100 });
            annotations.push(Annotation {
                id,
                image_id: id,
                category_id: cat,
                bbox: BoundingBox::new(1.0, 1.0, 10.0, 10.0).unwrap(),
            });
        }
    }
    let categories = vec![
        CategoryLabel { id: 1, name: "circuit_board".into() },
        CategoryLabel { id: 2, name: "sensor".into() },
    ];
    Dataset::new(images, annotations, categories).unwrap()
}

/// Integer-coordinate box inside a `w x h` image.
fn boxed_image() -> impl Strategy<Value = (u32, u32, BoundingBox)> {
    (1u32..200, 1u32..200).prop_flat_map(|(w, h)| {
        (0..w, 0..h).prop_flat_map(move |(x, y)| {
            (1..=w - x, 1..=h - y).prop_map(move |(bw, bh)| {
                let b = BoundingBox::new(x.into(), y.into(), bw.into(), bh.into()).unwrap();
                (w, h, b)
            })
        })
    })
}

fn single(b: BoundingBox) -> Vec<Annotation> {
    vec![Annotation { id: 1, image_id: 1, category_id: 1, bbox: b }]
}

fn transform() -> impl Strategy<Value = Transform> {
    prop::sample::select(Transform::ALL.to_vec())
}

/// Random dataset: images with 1..4 annotations over up to 3 categories.
fn dataset() -> impl Strategy<Value = Dataset> {
    prop::collection::vec(prop::collection::vec((1u32..=3, 0u32..50, 0u32..50, 1u32..30, 1u32..30), 1..4), 0..30)
        .prop_map(|images| {
            let mut recs = Vec::new();
            let mut anns = Vec::new();
            for (i, boxes) in images.into_iter().enumerate() {
                let image_id = i as u64 + 10;
                recs.push(ImageRecord { id: image_id, file_name: format!("img{i}.png"), width: 80, height: 80 });
                for (cat, x, y, w, h) in boxes {
                    anns.push(Annotation {
                        id: 1000 - anns.len() as u64,
                        image_id,
                        category_id: cat,
                        bbox: BoundingBox::new(x.into(), y.into(), w.into(), h.into()).unwrap(),
                    });
                }
            }
            let cats = (1..=3).map(|id| CategoryLabel { id, name: format!("c{id}") }).collect();
            Dataset::new(recs, anns, cats).unwrap()
        })
}

proptest! {
    #[test]
    fn parse_emit_parse_is_a_fixed_point(d in dataset()) {
        let emitted = emit_coco(&d);
        let reparsed = parse_coco(emitted.as_bytes()).unwrap();
        prop_assert_eq!(&reparsed, &d);
        prop_assert_eq!(emit_coco(&reparsed), emitted);
    }

    #[test]
    fn transforms_preserve_area_and_bounds((w, h, b) in boxed_image(), t in transform()) {
        let out = augment(&single(b), w, h, t);
        let nb = out.annotations[0].bbox;
        prop_assert_eq!(nb.area(), b.area());
        prop_assert!(nb.fits_within(out.width.into(), out.height.into()));
        if t.swaps_dimensions() {
            prop_assert_eq!((out.width, out.height), (h, w));
            prop_assert_eq!((nb.width(), nb.height()), (b.height(), b.width()));
        } else {
            prop_assert_eq!((out.width, out.height), (w, h));
        }
    }

    #[test]
    fn flips_are_involutions((w, h, b) in boxed_image()) {
        for t in [Transform::HorizontalFlip, Transform::VerticalFlip, Transform::Rotate180] {
            let once = augment(&single(b), w, h, t);
            let twice = augment(&once.annotations, once.width, once.height, t);
            prop_assert_eq!(twice.annotations[0].bbox, b);
        }
    }

    #[test]
    fn four_quarter_turns_are_identity((w, h, b) in boxed_image()) {
        let mut cur = augment(&single(b), w, h, Transform::Rotate90);
        for _ in 0..3 {
            cur = augment(&cur.annotations, cur.width, cur.height, Transform::Rotate90);
        }
        prop_assert_eq!((cur.width, cur.height), (w, h));
        prop_assert_eq!(cur.annotations[0].bbox, b);

        let there = augment(&single(b), w, h, Transform::Rotate90);
        let back = augment(&there.annotations, there.width, there.height, Transform::Rotate270);
        prop_assert_eq!(back.annotations[0].bbox, b);
    }

    #[test]
    fn split_partitions_and_respects_strata(d in dataset(), f in 0.05f64..0.95, seed in any::<u64>()) {
        let cfg = SplitConfig { train_fraction: f, seed, strict: false };
        let (train, test) = stratified_split(&d, &cfg).unwrap();
        let tr: HashSet<u64> = train.images().iter().map(|i| i.id).collect();
        let te: HashSet<u64> = test.images().iter().map(|i| i.id).collect();
        prop_assert!(tr.is_disjoint(&te));
        prop_assert_eq!(tr.len() + te.len(), d.images().len());

        // Recompute strata independently: category of the lowest annotation id.
        for cat in 1..=3u32 {
            let members: Vec<u64> = d.images().iter().map(|i| i.id).filter(|id| {
                d.annotations().iter().filter(|a| a.image_id == *id).min_by_key(|a| a.id).unwrap().category_id == cat
            }).collect();
            let in_train = members.iter().filter(|id| tr.contains(id)).count() as f64;
            prop_assert!((in_train - f * members.len() as f64).abs() <= 1.0);
        }
        prop_assert_eq!(stratified_split(&d, &cfg).unwrap(), (train, test));
    }
}
