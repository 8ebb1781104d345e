use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Image, SceneConfig, Video};
use crate::error::Result;
use crate::mask::{ClassKind, ClassTable, SegMask};

/// A generated video with a mask for every frame.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedVideo {
    pub id: String,
    pub frames: Vec<Image>,
    pub masks: Vec<SegMask>,
}

impl GeneratedVideo {
    /// Keeps only the masks of labeled frames.
    pub fn into_video(self, label_stride: usize) -> Result<Video> {
        let masks = self
            .masks
            .into_iter()
            .enumerate()
            .map(|(i, m)| super::is_labeled(i, label_stride).then_some(m))
            .collect();
        Video::new(self.id, self.frames, masks)
    }
}

const HARMONICS: usize = 4;

/// Star-shaped region whose boundary harmonics rotate slowly while its
/// centre drifts and bounces off an inner margin.
#[derive(Clone, Copy)]
struct Blob {
    class: u8,
    centre: (f64, f64),
    velocity: (f64, f64),
    radius: f64,
    amps: [f64; HARMONICS],
    phases: [f64; HARMONICS],
    speeds: [f64; HARMONICS],
    /// Frames `[start, end)` in which the blob exists.
    alive: (usize, usize),
}

impl Blob {
    fn contains(&self, x: f64, y: f64, t: usize) -> bool {
        if t < self.alive.0 || t >= self.alive.1 {
            return false;
        }
        let dx = x - self.centre.0;
        let dy = y - self.centre.1;
        let d2 = dx * dx + dy * dy;
        let theta = dy.atan2(dx);
        let mut r = 1.0;
        for k in 0..HARMONICS {
            r += self.amps[k]
                * ((k + 2) as f64 * theta + self.phases[k] + self.speeds[k] * t as f64).cos();
        }
        let r = self.radius * r;
        d2 <= r * r
    }

    fn advance(&mut self, hw: (usize, usize)) {
        let bounds = [hw.1 as f64, hw.0 as f64];
        let mut pos = [self.centre.0, self.centre.1];
        let mut vel = [self.velocity.0, self.velocity.1];
        for a in 0..2 {
            let (lo, hi) = (0.15 * bounds[a], 0.85 * bounds[a]);
            pos[a] += vel[a];
            if pos[a] < lo {
                pos[a] = 2.0 * lo - pos[a];
                vel[a] = -vel[a];
            } else if pos[a] > hi {
                pos[a] = 2.0 * hi - pos[a];
                vel[a] = -vel[a];
            }
        }
        self.centre = (pos[0], pos[1]);
        self.velocity = (vel[0], vel[1]);
    }
}

/// Straight shaft with a wider jaw, entering through one image border.
struct Tool {
    class: u8,
    entry: (f64, f64),
    dir: (f64, f64),
    /// Unit vector along the border the entry point slides on.
    slide_dir: (f64, f64),
    slide_speed: f64,
    slide_limits: (f64, f64),
    slide: f64,
    depth: f64,
    depth_amp: f64,
    depth_freq: f64,
    depth_phase: f64,
    half_width: f64,
}

impl Tool {
    fn origin(&self) -> (f64, f64) {
        (
            self.entry.0 + self.slide * self.slide_dir.0,
            self.entry.1 + self.slide * self.slide_dir.1,
        )
    }

    fn reach(&self, t: usize) -> f64 {
        self.depth + self.depth_amp * (self.depth_freq * t as f64 + self.depth_phase).sin()
    }

    fn contains(&self, x: f64, y: f64, t: usize) -> bool {
        let (ox, oy) = self.origin();
        let (px, py) = (x - ox, y - oy);
        let along = px * self.dir.0 + py * self.dir.1;
        let across = (px * self.dir.1 - py * self.dir.0).abs();
        let reach = self.reach(t);
        if along > reach {
            return false;
        }
        let jaw = along > reach - 6.0;
        across <= if jaw { self.half_width + 1.5 } else { self.half_width }
    }

    fn advance(&mut self) {
        self.slide += self.slide_speed;
        let (lo, hi) = self.slide_limits;
        if self.slide < lo {
            self.slide = 2.0 * lo - self.slide;
            self.slide_speed = -self.slide_speed;
        } else if self.slide > hi {
            self.slide = 2.0 * hi - self.slide;
            self.slide_speed = -self.slide_speed;
        }
    }
}

fn palette(classes: &ClassTable) -> Vec<[f64; 3]> {
    // anatomy classes 1 and 2 share nearly the same tissue colour
    const ANATOMY: [[f64; 3]; 5] = [
        [0.78, 0.42, 0.38],
        [0.72, 0.47, 0.41],
        [0.88, 0.78, 0.48],
        [0.58, 0.36, 0.52],
        [0.66, 0.58, 0.36],
    ];
    let rare = classes.len() as u8 - 1;
    let mut anatomy_seen = 0;
    (0..classes.len() as u8)
        .map(|c| match classes.kind(c).expect("in table") {
            ClassKind::Background => [0.42, 0.17, 0.14],
            ClassKind::Instrument => [0.74, 0.76, 0.80],
            ClassKind::Anatomy if c == rare => [0.46, 0.64, 0.40],
            ClassKind::Anatomy => {
                anatomy_seen += 1;
                ANATOMY[(anatomy_seen - 1) % ANATOMY.len()]
            }
        })
        .collect()
}

fn random_blob(
    rng: &mut ChaCha8Rng,
    class: u8,
    anchor: (f64, f64),
    radius: (f64, f64),
    cfg: &SceneConfig,
    alive: (usize, usize),
) -> Blob {
    let (h, w) = (cfg.frame_hw.0 as f64, cfg.frame_hw.1 as f64);
    let size = h.min(w);
    let centre = (
        (anchor.0 + rng.random_range(-0.08..=0.08)) * w,
        (anchor.1 + rng.random_range(-0.08..=0.08)) * h,
    );
    let heading = rng.random_range(0.0..TAU);
    let speed = cfg.blob_drift * rng.random_range(0.5..=1.0);
    let mut amps = [0.0; HARMONICS];
    let mut phases = [0.0; HARMONICS];
    let mut speeds = [0.0; HARMONICS];
    for k in 0..HARMONICS {
        amps[k] = rng.random_range(0.0..=0.07);
        phases[k] = rng.random_range(0.0..TAU);
        speeds[k] = cfg.boundary_jitter * rng.random_range(-1.0..=1.0);
    }
    Blob {
        class,
        centre,
        velocity: (speed * heading.cos(), speed * heading.sin()),
        radius: rng.random_range(radius.0..=radius.1) * size,
        amps,
        phases,
        speeds,
        alive,
    }
}

fn random_tool(rng: &mut ChaCha8Rng, class: u8, cfg: &SceneConfig) -> Tool {
    let (h, w) = (cfg.frame_hw.0 as f64, cfg.frame_hw.1 as f64);
    let size = h.min(w);
    let side = rng.random_range(0..4);
    let along = rng.random_range(0.3..=0.7);
    // entry point on the border, inward normal, slide direction
    let (entry, normal, slide_dir, extent) = match side {
        0 => ((w, along * h), (-1.0, 0.0), (0.0, 1.0), h),
        1 => ((along * w, h), (0.0, -1.0), (1.0, 0.0), w),
        2 => ((0.0, along * h), (1.0, 0.0), (0.0, 1.0), h),
        _ => ((along * w, 0.0), (0.0, 1.0), (1.0, 0.0), w),
    };
    let tilt: f64 = rng.random_range(-0.6..=0.6);
    let (s, c) = tilt.sin_cos();
    let dir = (normal.0 * c - normal.1 * s, normal.0 * s + normal.1 * c);
    let along_px = along * extent;
    let depth_amp = rng.random_range(2.0..=6.0);
    Tool {
        class,
        entry,
        dir,
        slide_dir,
        slide_speed: rng.random_range(-0.3..=0.3),
        slide_limits: (0.2 * extent - along_px, 0.8 * extent - along_px),
        slide: 0.0,
        depth: rng.random_range(0.35..=0.55) * size,
        depth_amp,
        depth_freq: rng.random_range(0.3..=0.8) * (0.6 / depth_amp),
        depth_phase: rng.random_range(0.0..TAU),
        half_width: 4.5,
    }
}

/// Cells covered by `blob` in each frame of its lifetime, or `None` if it
/// would touch a non-background pixel or its 1-pixel ring.
fn place_isolated(
    blob: &Blob,
    grids: &[Vec<u8>],
    hw: (usize, usize),
    background: u8,
) -> Option<Vec<(usize, Vec<usize>)>> {
    let (h, w) = hw;
    let mut blob = *blob;
    let mut out = Vec::new();
    for t in blob.alive.0..blob.alive.1 {
        let mut cells = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !blob.contains(x as f64, y as f64, t) {
                    continue;
                }
                let ring = (y.saturating_sub(1)..=(y + 1).min(h - 1))
                    .flat_map(|yy| (x.saturating_sub(1)..=(x + 1).min(w - 1)).map(move |xx| yy * w + xx));
                for i in ring {
                    if grids[t][i] != background {
                        return None;
                    }
                }
                cells.push(y * w + x);
            }
        }
        if cells.is_empty() {
            return None;
        }
        out.push((t, cells));
        blob.advance(hw);
    }
    Some(out)
}

/// Renders one video. The geometry and the appearance draw from separate
/// random streams, so smoke settings never change the masks.
pub fn generate_video(cfg: &SceneConfig, index: u64) -> Result<GeneratedVideo> {
    cfg.validate()?;
    let classes = ClassTable::synthetic(cfg.num_classes)?;
    let (h, w) = cfg.frame_hw;
    let len = cfg.video_length;

    let mut geo = ChaCha8Rng::seed_from_u64(cfg.seed);
    geo.set_stream(2 * index);
    let mut look = ChaCha8Rng::seed_from_u64(cfg.seed);
    look.set_stream(2 * index + 1);

    let regular: Vec<u8> = classes.anatomy().filter(|&c| c as usize != cfg.num_classes - 1).collect();
    let rare = (cfg.num_classes - 1) as u8;
    let tool_class = classes.ids_of(ClassKind::Instrument).next().expect("synthetic table");

    let mut blobs = Vec::new();
    let m = regular.len().max(2) as f64 - 1.0;
    for (j, &class) in regular.iter().enumerate() {
        if geo.random::<f64>() >= 0.9 {
            continue;
        }
        let t = j as f64 / m;
        let anchor = (0.28 + 0.44 * t, 0.3 + 0.4 * (1.0 - (2.0 * t - 1.0).abs()));
        let radius = if j == 0 { (0.2, 0.26) } else { (0.12, 0.17) };
        blobs.push(random_blob(&mut geo, class, anchor, radius, cfg, (0, len)));
    }
    let mut tool = random_tool(&mut geo, tool_class, cfg);

    let mut grids = Vec::with_capacity(len);
    for t in 0..len {
        let mut grid = vec![classes.background(); h * w];
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f64, y as f64);
                let cell = &mut grid[y * w + x];
                for b in &blobs {
                    if b.contains(fx, fy, t) {
                        *cell = b.class;
                    }
                }
                if tool.contains(fx, fy, t) {
                    *cell = tool.class;
                }
            }
        }
        grids.push(grid);
        for b in &mut blobs {
            b.advance(cfg.frame_hw);
        }
        tool.advance();
    }

    // The rare class only shows up for a short stretch, placed where it never
    // touches other tissue or the tool.
    if geo.random::<f64>() < 0.7 {
        let span = ((0.2 * len as f64).round() as usize).max(1);
        let start = geo.random_range(0..=len - span);
        for _ in 0..8 {
            let anchor = (geo.random_range(0.2..=0.8), geo.random_range(0.2..=0.8));
            let mut blob =
                random_blob(&mut geo, rare, anchor, (0.08, 0.11), cfg, (start, start + span));
            for _ in 0..start {
                blob.advance(cfg.frame_hw);
            }
            if let Some(painted) = place_isolated(&blob, &grids, cfg.frame_hw, classes.background()) {
                for (t, cells) in painted {
                    for i in cells {
                        grids[t][i] = rare;
                    }
                }
                break;
            }
        }
    }

    let colours = palette(&classes);
    let noise = Normal::new(0.0, 0.035).expect("valid sigma");
    let light_phase = look.random_range(0.0..TAU);
    // fine stripes tell the second tissue class apart from the first
    let striped = regular.get(1).copied();

    let mut frames = Vec::with_capacity(len);
    let mut masks = Vec::with_capacity(len);
    for t in 0..len {
        let grid = std::mem::take(&mut grids[t]);
        let smoke: Vec<((f64, f64), f64, f64)> = if look.random::<f64>() < cfg.occluder_probability {
            let n = look.random_range(1..=2);
            (0..n)
                .map(|_| {
                    let c = (look.random_range(0.0..w as f64), look.random_range(0.0..h as f64));
                    let sigma = look.random_range(0.15..=0.3) * h.min(w) as f64;
                    (c, sigma, look.random_range(0.55..=0.9))
                })
                .collect()
        } else {
            Vec::new()
        };
        let light = 1.0 + 0.06 * (0.3 * t as f64 + light_phase).sin();
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let norm = (h * h + w * w) as f64 / 4.0;

        let mut data = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                let class = grid[y * w + x];
                let (fx, fy) = (x as f64, y as f64);
                let vignette = 1.0 - 0.25 * ((fx - cx).powi(2) + (fy - cy).powi(2)) / norm;
                let stripe = if Some(class) == striped {
                    0.05 * (1.3 * (fx + fy)).sin()
                } else {
                    0.0
                };
                let mut alpha = 0.0f64;
                for &((sx, sy), sigma, peak) in &smoke {
                    let d2 = (fx - sx).powi(2) + (fy - sy).powi(2);
                    alpha = alpha.max(peak * (-d2 / (2.0 * sigma * sigma)).exp());
                }
                for ch in 0..3 {
                    let base = colours[class as usize][ch] * light * vignette + stripe;
                    let v = base + noise.sample(&mut look);
                    let v = (1.0 - alpha) * v + alpha * [0.86, 0.84, 0.82][ch];
                    data.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        frames.push(Image::new(h, w, data)?);
        masks.push(SegMask::new(h, w, grid, classes.clone())?);
    }
    Ok(GeneratedVideo {
        id: format!("vid{index:03}"),
        frames,
        masks,
    })
}

/// Generates `counts.0 + counts.1 + counts.2` videos and assigns them, in
/// order, to the train, validation and test splits.
pub fn generate_dataset(cfg: &SceneConfig, counts: (usize, usize, usize)) -> Result<Dataset> {
    let classes = ClassTable::synthetic(cfg.num_classes)?;
    let mut next = 0u64;
    let mut make = |n: usize| -> Result<Vec<Video>> {
        (0..n)
            .map(|_| {
                let v = generate_video(cfg, next)?;
                next += 1;
                v.into_video(cfg.label_stride)
            })
            .collect()
    };
    let train = make(counts.0)?;
    let val = make(counts.1)?;
    let test = make(counts.2)?;
    Ok(Dataset {
        classes,
        train,
        val,
        test,
    })
}

/// Share of labeled frames showing a class, and of labeled pixels it covers.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassFrequency {
    pub class: u8,
    pub kind: ClassKind,
    pub frame_percent: f64,
    pub pixel_percent: f64,
}

pub fn class_frequencies<'a>(
    videos: impl IntoIterator<Item = &'a Video>,
    classes: &ClassTable,
) -> Vec<ClassFrequency> {
    let n = classes.len();
    let mut frames_with = vec![0usize; n];
    let mut pixels = vec![0usize; n];
    let (mut frames, mut total_pixels) = (0usize, 0usize);
    for v in videos {
        for i in v.labeled_indices() {
            let m = v.mask(i).expect("labeled");
            frames += 1;
            total_pixels += m.grid().len();
            for c in m.present_classes() {
                frames_with[c as usize] += 1;
            }
            for &c in m.grid() {
                pixels[c as usize] += 1;
            }
        }
    }
    let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
    (0..n)
        .map(|c| ClassFrequency {
            class: c as u8,
            kind: classes.kind(c as u8).expect("in table"),
            frame_percent: pct(frames_with[c], frames),
            pixel_percent: pct(pixels[c], total_pixels),
        })
        .collect()
}

