//! Label masks and their class vocabulary.

use std::collections::BTreeSet;

use crate::error::{Result, TcnnError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClassKind {
    Background,
    Anatomy,
    Instrument,
}

impl ClassKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassKind::Background => "background",
            ClassKind::Anatomy => "anatomy",
            ClassKind::Instrument => "instrument",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "background" => Some(ClassKind::Background),
            "anatomy" => Some(ClassKind::Anatomy),
            "instrument" => Some(ClassKind::Instrument),
            _ => None,
        }
    }
}

/// Class id -> kind, with exactly one background class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassTable {
    kinds: Vec<ClassKind>,
    background: u8,
}

impl ClassTable {
    pub fn new(kinds: Vec<ClassKind>) -> Result<Self> {
        if kinds.is_empty() || kinds.len() > 256 {
            return Err(TcnnError::invalid(format!(
                "class table needs 1..=256 classes, got {}",
                kinds.len()
            )));
        }
        let bg: Vec<usize> = kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == ClassKind::Background)
            .map(|(i, _)| i)
            .collect();
        if bg.len() != 1 {
            return Err(TcnnError::invalid(format!(
                "class table needs exactly one background class, found {}",
                bg.len()
            )));
        }
        Ok(ClassTable {
            kinds,
            background: bg[0] as u8,
        })
    }

    /// Layout used by the synthetic generator: background 0, regular anatomy
    /// `1..n-2`, the instrument at `n-2` and a rare anatomy class at `n-1`.
    pub fn synthetic(num_classes: usize) -> Result<Self> {
        if num_classes < 4 {
            return Err(TcnnError::invalid(format!(
                "synthetic layout needs at least 4 classes, got {num_classes}"
            )));
        }
        let mut kinds = vec![ClassKind::Background];
        kinds.extend(std::iter::repeat_n(ClassKind::Anatomy, num_classes - 3));
        kinds.push(ClassKind::Instrument);
        kinds.push(ClassKind::Anatomy);
        Self::new(kinds)
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn background(&self) -> u8 {
        self.background
    }

    pub fn kind(&self, class: u8) -> Option<ClassKind> {
        self.kinds.get(class as usize).copied()
    }

    pub fn kinds(&self) -> &[ClassKind] {
        &self.kinds
    }

    /// Anatomy class ids in ascending order.
    pub fn anatomy(&self) -> impl Iterator<Item = u8> + '_ {
        self.ids_of(ClassKind::Anatomy)
    }

    pub fn ids_of(&self, kind: ClassKind) -> impl Iterator<Item = u8> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .filter(move |(_, k)| **k == kind)
            .map(|(i, _)| i as u8)
    }
}

/// A 2-D grid of class ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegMask {
    height: usize,
    width: usize,
    grid: Vec<u8>,
    classes: ClassTable,
}

impl SegMask {
    pub fn new(height: usize, width: usize, grid: Vec<u8>, classes: ClassTable) -> Result<Self> {
        if height == 0 || width == 0 || grid.len() != height * width {
            return Err(TcnnError::invalid(format!(
                "mask grid of {} values does not fit {height}x{width}",
                grid.len()
            )));
        }
        if let Some(&bad) = grid.iter().find(|&&v| v as usize >= classes.len()) {
            return Err(TcnnError::Validation(format!(
                "mask value {bad} outside the {} known classes",
                classes.len()
            )));
        }
        Ok(SegMask {
            height,
            width,
            grid,
            classes,
        })
    }

    pub fn filled(height: usize, width: usize, classes: ClassTable) -> Self {
        let bg = classes.background();
        SegMask {
            height,
            width,
            grid: vec![bg; height * width],
            classes,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn grid(&self) -> &[u8] {
        &self.grid
    }

    pub fn classes(&self) -> &ClassTable {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.grid[y * self.width + x]
    }

    /// Panics if `class` is not in the table.
    pub fn set(&mut self, y: usize, x: usize, class: u8) {
        assert!((class as usize) < self.classes.len(), "unknown class {class}");
        self.grid[y * self.width + x] = class;
    }

    pub fn count(&self, class: u8) -> usize {
        self.grid.iter().filter(|&&v| v == class).count()
    }

    pub fn present_classes(&self) -> BTreeSet<u8> {
        self.grid.iter().copied().collect()
    }

    /// Pixel coordinates `(y, x)` of one class.
    pub fn pixels_of(&self, class: u8) -> Vec<(usize, usize)> {
        self.grid
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == class)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    /// Re-checks every invariant; useful after foreign construction.
    pub fn validate(&self) -> Result<()> {
        SegMask::new(self.height, self.width, self.grid.clone(), self.classes.clone()).map(|_| ())
    }
}

/// One-hot `[N, C, H, W]` encoding of equally sized masks.
pub fn one_hot(masks: &[SegMask], num_classes: usize) -> Result<Tensor> {
    let first = masks
        .first()
        .ok_or_else(|| TcnnError::invalid("one_hot of an empty batch"))?;
    let (h, w) = (first.height(), first.width());
    let plane = h * w;
    let mut data = vec![0.0; masks.len() * num_classes * plane];
    for (b, m) in masks.iter().enumerate() {
        if (m.height(), m.width()) != (h, w) {
            return Err(TcnnError::invalid("one_hot: masks differ in size"));
        }
        for (px, &c) in m.grid().iter().enumerate() {
            if c as usize >= num_classes {
                return Err(TcnnError::invalid(format!(
                    "one_hot: class {c} out of {num_classes}"
                )));
            }
            data[(b * num_classes + c as usize) * plane + px] = 1.0;
        }
    }
    Tensor::new(vec![masks.len(), num_classes, h, w], data)
}
