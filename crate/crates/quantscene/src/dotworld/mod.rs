//! The abstract control experiment: gray rasters of white and black dots,
//! and a one-convolution-layer classifier over them.
//!
//! White dots stand for restrictor members carrying the scope property,
//! black dots for the remaining restrictor members, so the label of an
//! image follows from its dot counts alone. This strips object and property
//! recognition out of the task and leaves only the ratio computation.

use crate::models::{CheckpointDims, Init, Model, ModelError, ModelInput, ModelSpec, LOGIT_COUNT};
use crate::quantifier::{quantize_ratio, QuantifierLabel, SetCounts, ALL_LABELS};
use crate::tensor::{BoundParams, ParamSet, Tape, Tensor, Var};
use crate::world::feasible_counts;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;
use thiserror::Error;

const BACKGROUND: f64 = 0.5;
const WHITE: f64 = 1.0;
const BLACK: f64 = 0.0;
const IMAGE_MAGIC: &[u8; 4] = b"QDOT";

#[derive(Debug, Error)]
pub enum DotError {
    #[error("could not place {requested} dots of radius {radius} in a {height}×{width} frame")]
    Placement { requested: usize, radius: usize, height: usize, width: usize },
    #[error("dot rendering needs at least one dot")]
    Empty,
    #[error("dot i/o: {0}")]
    Io(#[from] io::Error),
    #[error("dot index line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("malformed dot file: {0}")]
    Malformed(String),
    #[error("label {label} is unreachable for dot scenes")]
    Unreachable { label: QuantifierLabel },
}

/// Grayscale raster with ground-truth dot counts. Background pixels are
/// exactly 0.5, white dots 1.0, black dots 0.0.
#[derive(Clone, Debug, PartialEq)]
pub struct DotImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
    pub white: usize,
    pub black: usize,
}

impl DotImage {
    pub fn counts(&self) -> SetCounts {
        SetCounts::new(self.white + self.black, self.white)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DotImageConfig {
    pub height: usize,
    pub width: usize,
    pub radius: usize,
}

impl Default for DotImageConfig {
    fn default() -> Self {
        Self { height: 64, width: 64, radius: 3 }
    }
}

/// Shape of the one-layer classifier.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DotNetConfig {
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub receptive: usize,
    pub stride: usize,
}

impl Default for DotNetConfig {
    fn default() -> Self {
        Self { height: 64, width: 64, filters: 8, receptive: 5, stride: 2 }
    }
}

const PLACEMENT_TRIES: usize = 200;
const PLACEMENT_RESTARTS: usize = 50;

/// Rejection-sample non-overlapping dot centers and paint the circles.
/// Dots stay fully inside the frame. A dead-end configuration restarts the
/// whole placement; running out of restarts is an error.
pub fn render_dots(
    white: usize,
    black: usize,
    config: &DotImageConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DotImage, DotError> {
    let total = white + black;
    if total == 0 {
        return Err(DotError::Empty);
    }
    let DotImageConfig { height, width, radius } = *config;
    if height <= 2 * radius || width <= 2 * radius {
        return Err(DotError::Placement { requested: total, radius, height, width });
    }
    let min_dist_sq = ((2 * radius + 1) * (2 * radius + 1)) as i64;
    let mut centers: Vec<(i64, i64)> = Vec::with_capacity(total);
    'restart: for attempt in 0.. {
        if attempt >= PLACEMENT_RESTARTS {
            return Err(DotError::Placement { requested: total, radius, height, width });
        }
        centers.clear();
        for _ in 0..total {
            let mut placed = false;
            for _ in 0..PLACEMENT_TRIES {
                let cy = rng.random_range(radius..height - radius) as i64;
                let cx = rng.random_range(radius..width - radius) as i64;
                if centers
                    .iter()
                    .all(|&(y, x)| (y - cy) * (y - cy) + (x - cx) * (x - cx) >= min_dist_sq)
                {
                    centers.push((cy, cx));
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'restart;
            }
        }
        break;
    }

    let mut pixels = vec![BACKGROUND; height * width];
    let r2 = (radius * radius) as i64;
    for (i, &(cy, cx)) in centers.iter().enumerate() {
        let value = if i < white { WHITE } else { BLACK };
        for dy in -(radius as i64)..=(radius as i64) {
            for dx in -(radius as i64)..=(radius as i64) {
                if dy * dy + dx * dx <= r2 {
                    let (y, x) = ((cy + dy) as usize, (cx + dx) as usize);
                    pixels[y * width + x] = value;
                }
            }
        }
    }
    Ok(DotImage { height, width, pixels, white, black })
}

/// One labeled dot image.
#[derive(Clone, Debug)]
pub struct DotRecord {
    pub id: u64,
    pub label: QuantifierLabel,
    pub counts: SetCounts,
    pub image: DotImage,
}

/// Balanced dot corpus: `per_quantifier` images per label, with (m, k)
/// drawn uniformly over the same feasible pairs as scene generation.
pub fn generate_dot_corpus(
    per_quantifier: usize,
    config: &DotImageConfig,
    seed: u64,
) -> Result<Vec<DotRecord>, DotError> {
    assert!(per_quantifier >= 1);
    let mut records = Vec::with_capacity(per_quantifier * ALL_LABELS.len());
    let mut id = 0u64;
    for label in ALL_LABELS {
        let feasible = feasible_counts(label, 6, 16);
        if feasible.is_empty() {
            return Err(DotError::Unreachable { label });
        }
        for i in 0..per_quantifier {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (label.ordinal() as u64 + 1).wrapping_mul(0x9E3779B97F4A7C15)
                    ^ (i as u64).wrapping_mul(0xBF58476D1CE4E5B9),
            );
            let counts = feasible[rng.random_range(0..feasible.len())];
            let image = render_dots(counts.k, counts.m - counts.k, config, &mut rng)?;
            debug_assert_eq!(quantize_ratio(image.counts()), Ok(label));
            records.push(DotRecord { id, label, counts, image });
            id += 1;
        }
    }
    Ok(records)
}

// ── the classifier ──────────────────────────────────────────────────────

/// One convolution layer, tanh, global average pooling, linear classifier.
pub struct DotCnn {
    spec: ModelSpec,
    config: DotNetConfig,
    params: ParamSet,
    filters: usize,
    conv_bias: usize,
    w_out: usize,
    b_out: usize,
}

impl DotCnn {
    pub fn new(spec: &ModelSpec, config: &DotNetConfig) -> Result<Self, ModelError> {
        if config.filters == 0
            || config.stride == 0
            || config.receptive > config.height.min(config.width)
        {
            return Err(ModelError::BadSpec(format!(
                "bad dot net config {config:?}"
            )));
        }
        let mut init = Init::new(spec.seed);
        let mut params = ParamSet::new();
        let r = config.receptive;
        let filters = params.push(
            "conv.filters",
            init.tensor3(config.filters, r, r, r * r + config.filters),
        );
        let conv_bias = params.push("conv.bias", Init::zeros(config.filters));
        let w_out = params.push("classifier.weight", init.matrix(LOGIT_COUNT, config.filters));
        let b_out = params.push("classifier.bias", Init::zeros(LOGIT_COUNT));
        Ok(Self { spec: *spec, config: *config, params, filters, conv_bias, w_out, b_out })
    }

    pub fn config(&self) -> &DotNetConfig {
        &self.config
    }
}

impl Model for DotCnn {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        input: &ModelInput,
    ) -> Result<Var, ModelError> {
        let image = input.image()?;
        if image.height != self.config.height || image.width != self.config.width {
            return Err(ModelError::BadSpec(format!(
                "image is {}×{}, classifier expects {}×{}",
                image.height, image.width, self.config.height, self.config.width
            )));
        }
        // Center on the background level: gray contributes nothing, white
        // dots +0.5, black dots −0.5. Keeps the tanh out of saturation.
        let centered: Vec<f64> = image.pixels.iter().map(|&p| p - BACKGROUND).collect();
        let x = tape.constant(Tensor::new(vec![image.height, image.width], centered)?);
        let conv = tape.conv2d(
            x,
            bound.var(self.filters),
            bound.var(self.conv_bias),
            self.config.stride,
        )?;
        let activated = tape.tanh(conv);
        let pooled = tape.global_avg_pool(activated)?;
        let wx = tape.matmul(bound.var(self.w_out), pooled)?;
        Ok(tape.add(wx, bound.var(self.b_out))?)
    }

    fn expected_param_count(&self) -> usize {
        let c = &self.config;
        c.filters * c.receptive * c.receptive + c.filters + LOGIT_COUNT * c.filters + LOGIT_COUNT
    }

    fn checkpoint_dims(&self) -> CheckpointDims {
        CheckpointDims::Dot(self.config)
    }
}

// ── persistence ─────────────────────────────────────────────────────────

pub const DOT_INDEX_FILE: &str = "dots.idx";
pub const DOT_IMAGE_FILE: &str = "dots.img";

#[derive(Serialize, Deserialize)]
struct DotMetaLine {
    kind: String,
    version: u32,
    seed: u64,
    per_quantifier: usize,
    config: DotImageConfig,
}

#[derive(Serialize, Deserialize)]
struct DotRecordLine {
    id: u64,
    label: QuantifierLabel,
    m: usize,
    k: usize,
    offset: u64,
}

fn encode_pixel(v: f64) -> u8 {
    if v == WHITE {
        255
    } else if v == BLACK {
        0
    } else {
        128
    }
}

fn decode_pixel(b: u8) -> Result<f64, DotError> {
    match b {
        255 => Ok(WHITE),
        0 => Ok(BLACK),
        128 => Ok(BACKGROUND),
        other => Err(DotError::Malformed(format!("pixel byte {other} is not tri-level"))),
    }
}

/// Append one image record: magic, dimensions, counts, then raw pixels.
fn write_image(w: &mut impl Write, image: &DotImage) -> Result<(), DotError> {
    w.write_all(IMAGE_MAGIC)?;
    for v in [image.height, image.width, image.white, image.black] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let bytes: Vec<u8> = image.pixels.iter().map(|&p| encode_pixel(p)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

fn read_image(r: &mut impl Read) -> Result<DotImage, DotError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != IMAGE_MAGIC {
        return Err(DotError::Malformed("bad image magic".into()));
    }
    let mut buf = [0u8; 4];
    let mut next = || -> Result<usize, DotError> {
        r.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf) as usize)
    };
    let (height, width, white, black) = (next()?, next()?, next()?, next()?);
    let mut bytes = vec![0u8; height * width];
    r.read_exact(&mut bytes)?;
    let pixels = bytes.into_iter().map(decode_pixel).collect::<Result<Vec<_>, _>>()?;
    Ok(DotImage { height, width, pixels, white, black })
}

pub fn save_dot_corpus(
    records: &[DotRecord],
    config: &DotImageConfig,
    per_quantifier: usize,
    seed: u64,
    dir: &Path,
) -> Result<(), DotError> {
    std::fs::create_dir_all(dir)?;
    let mut img = BufWriter::new(File::create(dir.join(DOT_IMAGE_FILE))?);
    let mut idx = BufWriter::new(File::create(dir.join(DOT_INDEX_FILE))?);
    let meta = DotMetaLine {
        kind: "meta".into(),
        version: 1,
        seed,
        per_quantifier,
        config: *config,
    };
    serde_json::to_writer(&mut idx, &meta).map_err(|source| DotError::Json { line: 1, source })?;
    idx.write_all(b"\n")?;
    let mut offset = 0u64;
    for (line, record) in records.iter().enumerate() {
        let entry = DotRecordLine {
            id: record.id,
            label: record.label,
            m: record.counts.m,
            k: record.counts.k,
            offset,
        };
        serde_json::to_writer(&mut idx, &entry)
            .map_err(|source| DotError::Json { line: line + 2, source })?;
        idx.write_all(b"\n")?;
        write_image(&mut img, &record.image)?;
        offset += (IMAGE_MAGIC.len() + 16 + record.image.pixels.len()) as u64;
    }
    idx.flush()?;
    img.flush()?;
    Ok(())
}

pub struct LoadedDotCorpus {
    pub seed: u64,
    pub per_quantifier: usize,
    pub config: DotImageConfig,
    pub records: Vec<DotRecord>,
}

pub fn load_dot_corpus(dir: &Path) -> Result<LoadedDotCorpus, DotError> {
    let idx = BufReader::new(File::open(dir.join(DOT_INDEX_FILE))?);
    let mut img = BufReader::new(File::open(dir.join(DOT_IMAGE_FILE))?);
    let mut lines = idx.lines().enumerate();
    let (_, first) =
        lines.next().ok_or_else(|| DotError::Malformed("empty dot index".into()))?;
    let meta: DotMetaLine = serde_json::from_str(&first?)
        .map_err(|source| DotError::Json { line: 1, source })?;
    if meta.kind != "meta" || meta.version != 1 {
        return Err(DotError::Malformed("unsupported dot index header".into()));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let entry: DotRecordLine = serde_json::from_str(&line)
            .map_err(|source| DotError::Json { line: i + 1, source })?;
        img.seek(SeekFrom::Start(entry.offset))?;
        let image = read_image(&mut img)?;
        let counts = SetCounts { m: entry.m, k: entry.k };
        if image.counts() != counts || quantize_ratio(counts) != Ok(entry.label) {
            return Err(DotError::Malformed(format!(
                "record {}: counts, label, and image disagree",
                entry.id
            )));
        }
        records.push(DotRecord { id: entry.id, label: entry.label, counts, image });
    }
    Ok(LoadedDotCorpus {
        seed: meta.seed,
        per_quantifier: meta.per_quantifier,
        config: meta.config,
        records,
    })
}
