//! Directory layout:
//!
//! ```text
//! <root>/classes.tsv
//! <root>/class_frequency.tsv
//! <root>/<split>/manifest.tsv
//! <root>/<split>/<video_id>/frame_<i>.ppm
//! <root>/<split>/<video_id>/mask_<i>.pgm   (labeled frames only)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::netpbm::{read_image, read_mask, write_image, write_mask};
use super::{class_frequencies, Dataset, Video};
use crate::error::{Result, TcnnError};
use crate::mask::{ClassKind, ClassTable};

const MANIFEST_HEADER: &str = "video_id\tframe\tlabeled";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Split::ALL.into_iter().find(|sp| sp.as_str() == s)
    }
}

fn write_classes(root: &Path, classes: &ClassTable) -> Result<()> {
    let mut out = String::from("id\tkind\n");
    for (i, k) in classes.kinds().iter().enumerate() {
        writeln!(out, "{i}\t{}", k.as_str()).expect("string write");
    }
    fs::write(root.join("classes.tsv"), out)?;
    Ok(())
}

/// Reads `<root>/classes.tsv`.
pub fn read_classes(root: &Path) -> Result<ClassTable> {
    let text = fs::read_to_string(root.join("classes.tsv"))?;
    let mut kinds = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let mut cols = line.split('\t');
        let (Some(id), Some(kind), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(TcnnError::Config {
                line: n + 1,
                message: "classes.tsv rows need two columns".into(),
            });
        };
        if id.parse::<usize>().ok() != Some(kinds.len()) {
            return Err(TcnnError::Config {
                line: n + 1,
                message: format!("expected class id {}, found {id}", kinds.len()),
            });
        }
        let kind = ClassKind::parse(kind).ok_or_else(|| TcnnError::Config {
            line: n + 1,
            message: format!("unknown class kind {kind}"),
        })?;
        kinds.push(kind);
    }
    ClassTable::new(kinds)
}

/// Writes every split, the class table and the class frequency table.
pub fn write_dataset(root: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root)?;
    write_classes(root, &data.classes)?;
    for split in Split::ALL {
        let dir = root.join(split.as_str());
        fs::create_dir_all(&dir)?;
        let mut manifest = format!("{MANIFEST_HEADER}\n");
        for video in data.videos(split) {
            let vdir = dir.join(video.id());
            fs::create_dir_all(&vdir)?;
            for i in 0..video.len() {
                write_image(vdir.join(format!("frame_{i}.ppm")), video.frame(i))?;
                let labeled = match video.mask(i) {
                    Some(m) => {
                        write_mask(vdir.join(format!("mask_{i}.pgm")), m)?;
                        1
                    }
                    None => 0,
                };
                writeln!(manifest, "{}\t{i}\t{labeled}", video.id()).expect("string write");
            }
        }
        fs::write(dir.join("manifest.tsv"), manifest)?;
    }

    let all = data.train.iter().chain(&data.val).chain(&data.test);
    let mut freq = String::from("class\tkind\tframes_percent\tpixels_percent\n");
    for f in class_frequencies(all, &data.classes) {
        writeln!(
            freq,
            "{}\t{}\t{:.2}\t{:.2}",
            f.class,
            f.kind.as_str(),
            f.frame_percent,
            f.pixel_percent
        )
        .expect("string write");
    }
    fs::write(root.join("class_frequency.tsv"), freq)?;
    Ok(())
}

/// Reads one split back in manifest order.
pub fn read_split(root: impl AsRef<Path>, split: Split, classes: &ClassTable) -> Result<Vec<Video>> {
    let dir = root.as_ref().join(split.as_str());
    let text = fs::read_to_string(dir.join("manifest.tsv"))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, MANIFEST_HEADER)) => {}
        _ => {
            return Err(TcnnError::Config {
                line: 1,
                message: format!("manifest header must be {MANIFEST_HEADER:?}"),
            })
        }
    }
    // video id -> ordered frame flags, keeping first-appearance order
    let mut order: Vec<String> = Vec::new();
    let mut entries: BTreeMap<String, Vec<(usize, bool)>> = BTreeMap::new();
    for (n, line) in lines {
        let bad = |message: String| TcnnError::Config { line: n + 1, message };
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, frame, labeled] = cols[..] else {
            return Err(bad("manifest rows need three columns".into()));
        };
        let frame: usize = frame
            .parse()
            .map_err(|_| bad(format!("bad frame index {frame}")))?;
        let labeled = match labeled {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("labeled flag must be 0 or 1, got {other}"))),
        };
        let slot = entries.entry(id.to_owned()).or_insert_with(|| {
            order.push(id.to_owned());
            Vec::new()
        });
        if frame != slot.len() {
            return Err(bad(format!("video {id}: expected frame {}, found {frame}", slot.len())));
        }
        slot.push((frame, labeled));
    }

    let mut videos = Vec::with_capacity(order.len());
    for id in order {
        let vdir = dir.join(&id);
        let mut frames = Vec::new();
        let mut masks = Vec::new();
        for (i, labeled) in &entries[&id] {
            frames.push(read_image(vdir.join(format!("frame_{i}.ppm")))?);
            masks.push(if *labeled {
                Some(read_mask(vdir.join(format!("mask_{i}.pgm")), classes)?)
            } else {
                None
            });
        }
        videos.push(Video::new(id, frames, masks)?);
    }
    Ok(videos)
}

pub fn read_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let classes = read_classes(root)?;
    let data = Dataset {
        train: read_split(root, Split::Train, &classes)?,
        val: read_split(root, Split::Val, &classes)?,
        test: read_split(root, Split::Test, &classes)?,
        classes,
    };
    data.split().validate()?;
    Ok(data)
}
