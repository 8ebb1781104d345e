//! Synthetic surgical-style videos, sparse labels, training windows and their
//! on-disk form.

mod generate;
pub mod netpbm;
mod store;

pub use generate::{class_frequencies, generate_dataset, generate_video, ClassFrequency, GeneratedVideo};
pub use store::{read_classes, read_dataset, read_split, write_dataset, Split};

use crate::error::{Result, TcnnError};
use crate::mask::SegMask;
use crate::tensor::Tensor;

/// Frames per training window.
pub const WINDOW_LEN: usize = 4;

/// 8-bit RGB image, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width * 3 {
            return Err(TcnnError::invalid(format!(
                "{} bytes do not form a {height}x{width} RGB image",
                data.len()
            )));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Planar `[3, H, W]` tensor scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.height * self.width;
        let mut out = vec![0.0; 3 * plane];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + i] = f64::from(px[c]) / 255.0;
            }
        }
        Tensor::new(vec![3, self.height, self.width], out).expect("three planes")
    }
}

/// Stacks equally sized images into `[N, 3, H, W]`.
pub fn stack_images(images: &[&Image]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| TcnnError::invalid("cannot stack zero images"))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if (img.height(), img.width()) != (h, w) {
            return Err(TcnnError::invalid("images differ in size"));
        }
        data.extend_from_slice(img.to_tensor().data());
    }
    Tensor::new(vec![images.len(), 3, h, w], data)
}

/// Generator settings for one corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    /// Including background.
    pub num_classes: usize,
    pub frame_hw: (usize, usize),
    pub video_length: usize,
    pub label_stride: usize,
    /// Upper bound on blob centre drift, pixels per frame.
    pub blob_drift: f64,
    /// Phase speed of the boundary harmonics, radians per frame.
    pub boundary_jitter: f64,
    /// Chance that a frame carries smoke blotches.
    pub occluder_probability: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            num_classes: 6,
            frame_hw: (64, 64),
            video_length: 24,
            label_stride: 4,
            blob_drift: 0.5,
            boundary_jitter: 0.05,
            occluder_probability: 0.3,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 4 {
            return Err(TcnnError::invalid("scenes need at least 4 classes"));
        }
        if self.frame_hw.0 < 16 || self.frame_hw.1 < 16 {
            return Err(TcnnError::invalid("frames must be at least 16x16"));
        }
        if self.label_stride < 1 || self.video_length < self.label_stride + 1 {
            return Err(TcnnError::invalid(format!(
                "need label_stride >= 1 and video_length >= label_stride + 1, got {} and {}",
                self.label_stride, self.video_length
            )));
        }
        if !(self.blob_drift >= 0.0 && self.blob_drift <= 2.0) {
            return Err(TcnnError::invalid("blob_drift must lie in [0, 2]"));
        }
        if !(self.boundary_jitter >= 0.0 && self.boundary_jitter <= 0.5) {
            return Err(TcnnError::invalid("boundary_jitter must lie in [0, 0.5]"));
        }
        if !(0.0..=1.0).contains(&self.occluder_probability) {
            return Err(TcnnError::invalid("occluder_probability must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn is_labeled(&self, frame: usize) -> bool {
        is_labeled(frame, self.label_stride)
    }
}

/// Frame `i` carries a label when it closes a block of `label_stride` frames.
pub fn is_labeled(frame: usize, label_stride: usize) -> bool {
    label_stride > 0 && frame % label_stride == label_stride - 1
}

/// A sparsely labeled video: every frame has an image, only labeled frames
/// have a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    id: String,
    frames: Vec<Image>,
    masks: Vec<Option<SegMask>>,
}

impl Video {
    pub fn new(id: impl Into<String>, frames: Vec<Image>, masks: Vec<Option<SegMask>>) -> Result<Self> {
        let id = id.into();
        if frames.is_empty() || frames.len() != masks.len() {
            return Err(TcnnError::invalid(format!(
                "video {id}: {} frames and {} mask slots",
                frames.len(),
                masks.len()
            )));
        }
        let (h, w) = (frames[0].height(), frames[0].width());
        for (i, (f, m)) in frames.iter().zip(&masks).enumerate() {
            if (f.height(), f.width()) != (h, w)
                || m.as_ref().is_some_and(|m| (m.height(), m.width()) != (h, w))
            {
                return Err(TcnnError::invalid(format!("video {id}: frame {i} has a different size")));
            }
        }
        Ok(Video { id, frames, masks })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, i: usize) -> &Image {
        &self.frames[i]
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn mask(&self, i: usize) -> Option<&SegMask> {
        self.masks[i].as_ref()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.masks[i].is_some()).collect()
    }
}

/// Four frames at a regular spacing; only the last one is labeled.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceWindow {
    video_id: String,
    frame_indices: [usize; WINDOW_LEN],
    frames: [Image; WINDOW_LEN],
    gt_mask: SegMask,
}

impl SequenceWindow {
    /// Checks that the indices increase with one fixed spacing and that the
    /// frames and mask share a size.
    pub fn new(
        video_id: impl Into<String>,
        frame_indices: [usize; WINDOW_LEN],
        frames: [Image; WINDOW_LEN],
        gt_mask: SegMask,
    ) -> Result<Self> {
        let step = frame_indices[1].checked_sub(frame_indices[0]).unwrap_or(0);
        if step == 0 || frame_indices.windows(2).any(|p| p[1] != p[0] + step) {
            return Err(TcnnError::invalid(format!(
                "window indices {frame_indices:?} are not evenly spaced and increasing"
            )));
        }
        let hw = (gt_mask.height(), gt_mask.width());
        if frames.iter().any(|f| (f.height(), f.width()) != hw) {
            return Err(TcnnError::invalid("window frames and mask differ in size"));
        }
        Ok(SequenceWindow {
            video_id: video_id.into(),
            frame_indices,
            frames,
            gt_mask,
        })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn frame_indices(&self) -> [usize; WINDOW_LEN] {
        self.frame_indices
    }

    pub fn frames(&self) -> &[Image; WINDOW_LEN] {
        &self.frames
    }

    pub fn labeled_frame(&self) -> &Image {
        &self.frames[WINDOW_LEN - 1]
    }

    pub fn gt_mask(&self) -> &SegMask {
        &self.gt_mask
    }
}

/// Windows `[end - 3s, end - 2s, end - s, end]` for every labeled `end` whose
/// start lies inside the video.
pub fn window_indices(
    video_length: usize,
    label_stride: usize,
    fps_stride: usize,
) -> Vec<[usize; WINDOW_LEN]> {
    let span = (WINDOW_LEN - 1) * fps_stride;
    (0..video_length)
        .filter(|&end| is_labeled(end, label_stride) && end >= span)
        .map(|end| std::array::from_fn(|k| end - (WINDOW_LEN - 1 - k) * fps_stride))
        .collect()
}

/// One window per labeled frame of `video`. Labeled frames too close to the
/// start for a full window are skipped with a warning.
pub fn sample_windows(video: &Video, fps_stride: usize) -> Result<Vec<SequenceWindow>> {
    if fps_stride == 0 {
        return Err(TcnnError::invalid("fps_stride must be at least 1"));
    }
    let span = (WINDOW_LEN - 1) * fps_stride;
    let mut out = Vec::new();
    for end in video.labeled_indices() {
        if end < span {
            log::warn!(
                "video {}: labeled frame {end} is shorter than the window span {span}; skipped",
                video.id()
            );
            continue;
        }
        let frame_indices: [usize; WINDOW_LEN] =
            std::array::from_fn(|k| end - (WINDOW_LEN - 1 - k) * fps_stride);
        out.push(SequenceWindow {
            video_id: video.id().to_owned(),
            frame_indices,
            frames: frame_indices.map(|i| video.frame(i).clone()),
            gt_mask: video.mask(end).expect("labeled").clone(),
        });
    }
    Ok(out)
}

/// Video ids of the three splits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    /// Fails if any video id appears in more than one split.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for id in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(id) {
                return Err(TcnnError::Validation(format!("video {id} appears in two splits")));
            }
        }
        Ok(())
    }
}

/// Videos of every split plus their class vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub classes: crate::mask::ClassTable,
    pub train: Vec<Video>,
    pub val: Vec<Video>,
    pub test: Vec<Video>,
}

impl Dataset {
    pub fn split(&self) -> DatasetSplit {
        let ids = |v: &[Video]| v.iter().map(|v| v.id().to_owned()).collect();
        DatasetSplit {
            train: ids(&self.train),
            val: ids(&self.val),
            test: ids(&self.test),
        }
    }

    pub fn videos(&self, split: Split) -> &[Video] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}
