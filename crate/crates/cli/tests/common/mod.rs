#![allow(dead_code)]

#[path = "../../../core/tests/common/oracle.rs"]
pub mod oracle;
#[path = "../../../core/tests/common/scenes.rs"]
pub mod scenes;

use std::path::{Path, PathBuf};

use doodle_cli::io::encode_png;
use doodle_core::Tensor;

pub struct SceneFiles {
    pub content: PathBuf,
    pub style: PathBuf,
    pub content_map: PathBuf,
    pub style_map: PathBuf,
}

pub struct SceneBytes {
    pub content: Vec<u8>,
    pub style: Vec<u8>,
    pub content_map: Vec<u8>,
    pub style_map: Vec<u8>,
}

/// Two-region scene encoded as PNG files.
pub fn scene_bytes(size: usize, seed: u64) -> SceneBytes {
    let s = scenes::two_region(size, seed);
    SceneBytes {
        content: encode_png(&s.content),
        style: encode_png(&s.style),
        content_map: encode_png(s.content_map.tensor()),
        style_map: encode_png(s.style_map.tensor()),
    }
}

pub fn write_scene(dir: &Path, size: usize, seed: u64) -> SceneFiles {
    let b = scene_bytes(size, seed);
    let files = SceneFiles {
        content: dir.join("content.png"),
        style: dir.join("style.png"),
        content_map: dir.join("content_map.png"),
        style_map: dir.join("style_map.png"),
    };
    std::fs::write(&files.content, b.content).unwrap();
    std::fs::write(&files.style, b.style).unwrap();
    std::fs::write(&files.content_map, b.content_map).unwrap();
    std::fs::write(&files.style_map, b.style_map).unwrap();
    files
}

pub fn write_png(path: &Path, t: &Tensor) {
    std::fs::write(path, encode_png(t)).unwrap();
}
