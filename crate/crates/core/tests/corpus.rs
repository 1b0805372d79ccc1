use std::path::PathBuf;

use keytone::classify::ClassifyPolicy;
use keytone::classify::ImageCategory;
use keytone::corpus;
use keytone::imageio::{encode_ppm, read_image};
use keytone::pipeline::classify_image;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

#[test]
fn checked_in_files_match_the_generator() {
    for cat in ImageCategory::ALL {
        let path = corpus_dir().join(corpus::file_name(cat));
        let on_disk = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(
            on_disk == encode_ppm(&corpus::scene(cat)),
            "{} is stale; rerun `cargo run -p keytone --example write_corpus`",
            path.display()
        );
    }
}

#[test]
fn corpus_files_classify_as_named() {
    for cat in ImageCategory::ALL {
        let img = read_image(&corpus_dir().join(corpus::file_name(cat)))
            .unwrap()
            .to_lab()
            .unwrap();
        let (got, masses) = classify_image(&img, ClassifyPolicy::MaxBandMass).unwrap();
        assert_eq!(got, cat, "{masses:?}");
    }
}
