//! Feature-bundle dataset format, synthetic generation, and splits.
//!
//! A bundle is a little-endian binary file: a fixed header followed by
//! per-sample records of raw 32-bit float token matrices, the foreground
//! mask, and labels. The layout is fixed (no self-description) so any
//! language can parse it and round trips are bit exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{McfError, Result};
use crate::model::{Geometry, StreamSample, Task};
use crate::rng::RngState;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MCFB";
pub const VERSION: u32 = 1;

/// Fixed bundle header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleHeader {
    pub task: Task,
    pub n_disc: u16,
    pub geometry: Geometry,
}

impl BundleHeader {
    fn dims(&self) -> [(&'static str, usize); 6] {
        let g = &self.geometry;
        [
            ("t_pe", g.t_pe),
            ("d_pe", g.d_pe),
            ("t_fg", g.t_fg),
            ("d_fg", g.d_fg),
            ("t_vs", g.t_vs),
            ("d_vs", g.d_vs),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.dims() {
            if v == 0 {
                return Err(McfError::FieldMismatch {
                    field: name.into(),
                    detail: "dimension must be >= 1".into(),
                });
            }
            if v > u16::MAX as usize {
                return Err(McfError::FieldMismatch {
                    field: name.into(),
                    detail: format!("dimension {v} exceeds u16"),
                });
            }
        }
        if self.n_disc == 0 {
            return Err(McfError::FieldMismatch {
                field: "n_disc".into(),
                detail: "must be >= 1".into(),
            });
        }
        Ok(())
    }

    /// Byte length of one sample record under this header.
    pub fn record_len(&self) -> usize {
        let g = &self.geometry;
        let floats = g.t_pe * g.d_pe + g.t_fg * g.d_fg + g.t_vs * g.d_vs;
        let label = match self.task {
            Task::MultilabelCont => self.n_disc as usize + 3 * 4,
            Task::SingleLabel => 2,
        };
        floats * 4 + g.t_fg + label
    }
}

/// Per-sample labels.
#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Multi { y_disc: Vec<u8>, y_cont: [f32; 3] },
    Single(u16),
}

/// One record: raw 32-bit features in row-major order plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleSample {
    pub e_pe: Vec<f32>,
    pub e_fg: Vec<f32>,
    pub e_vs: Vec<f32>,
    pub fg_mask: Vec<u8>,
    pub label: Label,
}

/// An in-memory dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub header: BundleHeader,
    pub samples: Vec<BundleSample>,
}

impl Bundle {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn check_sample(&self, i: usize) -> Result<()> {
        let g = &self.header.geometry;
        let s = &self.samples[i];
        let checks = [
            ("e_pe", s.e_pe.len(), g.t_pe * g.d_pe),
            ("e_fg", s.e_fg.len(), g.t_fg * g.d_fg),
            ("e_vs", s.e_vs.len(), g.t_vs * g.d_vs),
            ("fg_mask", s.fg_mask.len(), g.t_fg),
        ];
        for (field, got, want) in checks {
            if got != want {
                return Err(McfError::FieldMismatch {
                    field: field.into(),
                    detail: format!("sample {i}: length {got}, header implies {want}"),
                });
            }
        }
        if !s.fg_mask.iter().any(|&b| b != 0) {
            return Err(McfError::Mask(format!("sample {i} has no valid foreground token")));
        }
        match (&s.label, self.header.task) {
            (Label::Multi { y_disc, y_cont }, Task::MultilabelCont) => {
                if y_disc.len() != self.header.n_disc as usize {
                    return Err(McfError::FieldMismatch {
                        field: "y_disc".into(),
                        detail: format!(
                            "sample {i}: {} labels, header declares {}",
                            y_disc.len(),
                            self.header.n_disc
                        ),
                    });
                }
                if y_disc.iter().any(|&b| b > 1) {
                    return Err(McfError::FieldMismatch {
                        field: "y_disc".into(),
                        detail: format!("sample {i}: labels must be 0 or 1"),
                    });
                }
                if y_cont.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return Err(McfError::FieldMismatch {
                        field: "y_cont".into(),
                        detail: format!("sample {i}: AVD values must lie in [0, 1]"),
                    });
                }
            }
            (Label::Single(c), Task::SingleLabel) => {
                if *c >= self.header.n_disc {
                    return Err(McfError::FieldMismatch {
                        field: "class".into(),
                        detail: format!("sample {i}: class {c} >= n_disc {}", self.header.n_disc),
                    });
                }
            }
            _ => {
                return Err(McfError::FieldMismatch {
                    field: "label".into(),
                    detail: format!("sample {i}: label kind does not match header task"),
                });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.header.validate()?;
        for i in 0..self.samples.len() {
            self.check_sample(i)?;
        }
        Ok(())
    }

    /// Widened feature tensors for one sample.
    pub fn stream_sample(&self, i: usize) -> Result<StreamSample> {
        let g = &self.header.geometry;
        let s = &self.samples[i];
        let widen = |v: &[f32], t: usize, d: usize| {
            Tensor::from_vec(&[t, d], v.iter().map(|&x| x as f64).collect())
        };
        Ok(StreamSample {
            e_pe: widen(&s.e_pe, g.t_pe, g.d_pe)?,
            e_fg: widen(&s.e_fg, g.t_fg, g.d_fg)?,
            e_vs: widen(&s.e_vs, g.t_vs, g.d_vs)?,
            fg_mask: s.fg_mask.iter().map(|&b| b != 0).collect(),
        })
    }
}

fn push_f32s(buf: &mut Vec<u8>, vals: &[f32]) {
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Write a bundle. Output goes through a temp file and a rename so an
/// invalid bundle never leaves a partial file behind. Returns the byte
/// count written.
pub fn write_bundle(path: &Path, bundle: &Bundle) -> Result<u64> {
    bundle.validate()?;
    let h = &bundle.header;
    let mut buf = Vec::with_capacity(20 + bundle.len() * h.record_len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match h.task {
        Task::MultilabelCont => 0,
        Task::SingleLabel => 1,
    });
    buf.extend_from_slice(&h.n_disc.to_le_bytes());
    buf.extend_from_slice(&(bundle.len() as u32).to_le_bytes());
    for (_, v) in h.dims() {
        buf.extend_from_slice(&(v as u16).to_le_bytes());
    }
    for s in &bundle.samples {
        push_f32s(&mut buf, &s.e_pe);
        push_f32s(&mut buf, &s.e_fg);
        push_f32s(&mut buf, &s.e_vs);
        buf.extend_from_slice(&s.fg_mask);
        match &s.label {
            Label::Multi { y_disc, y_cont } => {
                buf.extend_from_slice(y_disc);
                push_f32s(&mut buf, y_cont);
            }
            Label::Single(c) => buf.extend_from_slice(&c.to_le_bytes()),
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(buf.len() as u64)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(McfError::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, file has {}",
                self.pos,
                self.data.len()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let b = self.take(4 * n, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

/// Read and validate a bundle.
pub fn read_bundle(path: &Path) -> Result<Bundle> {
    let mut data = Vec::new();
    fs::File::open(path)?.read_to_end(&mut data)?;
    let mut cur = Cursor { data: &data, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(McfError::BadMagic(format!("{magic:?}")));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(McfError::BadVersion(version));
    }
    let task = match cur.take(1, "task")?[0] {
        0 => Task::MultilabelCont,
        1 => Task::SingleLabel,
        other => {
            return Err(McfError::FieldMismatch {
                field: "task".into(),
                detail: format!("unknown task byte {other}"),
            })
        }
    };
    let n_disc = cur.u16("n_disc")?;
    let sample_count = cur.u32("sample_count")? as usize;
    let mut dims = [0usize; 6];
    for (i, name) in ["t_pe", "d_pe", "t_fg", "d_fg", "t_vs", "d_vs"].iter().enumerate() {
        dims[i] = cur.u16(name)? as usize;
    }
    let header = BundleHeader {
        task,
        n_disc,
        geometry: Geometry {
            t_pe: dims[0],
            d_pe: dims[1],
            t_fg: dims[2],
            d_fg: dims[3],
            t_vs: dims[4],
            d_vs: dims[5],
        },
    };
    header.validate()?;
    let expected = cur.pos + sample_count * header.record_len();
    if data.len() != expected {
        return Err(McfError::Truncated(format!(
            "header declares {sample_count} samples ({expected} bytes), file has {}",
            data.len()
        )));
    }
    let g = &header.geometry;
    let mut samples = Vec::with_capacity(sample_count);
    for i in 0..sample_count {
        let what = format!("sample {i}");
        let e_pe = cur.f32s(g.t_pe * g.d_pe, &what)?;
        let e_fg = cur.f32s(g.t_fg * g.d_fg, &what)?;
        let e_vs = cur.f32s(g.t_vs * g.d_vs, &what)?;
        let fg_mask = cur.take(g.t_fg, &what)?.to_vec();
        let label = match task {
            Task::MultilabelCont => {
                let y_disc = cur.take(n_disc as usize, &what)?.to_vec();
                let y = cur.f32s(3, &what)?;
                Label::Multi { y_disc, y_cont: [y[0], y[1], y[2]] }
            }
            Task::SingleLabel => Label::Single(cur.u16(&what)?),
        };
        samples.push(BundleSample { e_pe, e_fg, e_vs, fg_mask, label });
    }
    let bundle = Bundle { header, samples };
    bundle.validate()?;
    Ok(bundle)
}

/// Planted-signal mode of the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthMode {
    /// Class 1 when the two stream latents agree; separable only from
    /// both streams jointly.
    Xor,
    /// Thresholded random linear labels plus continuous targets.
    Linear,
}

impl SynthMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SynthMode::Xor => "xor",
            SynthMode::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Result<SynthMode> {
        match s {
            "xor" => Ok(SynthMode::Xor),
            "linear" => Ok(SynthMode::Linear),
            other => Err(McfError::Config(format!("unknown synthetic mode '{other}'"))),
        }
    }
}

/// Specification of a synthetic bundle. Generation is a pure function of
/// this value.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub mode: SynthMode,
    pub n_samples: usize,
    pub noise_sigma: f64,
    pub signal_strength: f64,
    pub seed: u64,
    pub geometry: Geometry,
    pub n_disc: u16,
}

impl SyntheticSpec {
    pub fn new(mode: SynthMode, n_samples: usize, seed: u64, geometry: Geometry) -> SyntheticSpec {
        let n_disc = match mode {
            SynthMode::Xor => 2,
            SynthMode::Linear => 26,
        };
        SyntheticSpec {
            mode,
            n_samples,
            noise_sigma: 1.0,
            signal_strength: 2.0,
            seed,
            geometry,
            n_disc,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_sigma < 0.0 {
            return Err(McfError::Config("noise_sigma must be >= 0".into()));
        }
        if self.signal_strength <= 0.0 {
            return Err(McfError::Config("signal_strength must be > 0".into()));
        }
        if self.mode == SynthMode::Xor && self.n_disc != 2 {
            return Err(McfError::Config("xor mode requires n_disc = 2".into()));
        }
        Ok(())
    }
}

fn unit_vector(d: usize, rng: &mut RngState) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Generate a synthetic bundle: Gaussian noise tokens with a fixed unit
/// signal direction per stream added (scaled by signal_strength * z) to
/// the first ceil(t/4) tokens of the foreground and scene streams.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Bundle> {
    spec.validate()?;
    let g = spec.geometry;
    let task = match spec.mode {
        SynthMode::Xor => Task::SingleLabel,
        SynthMode::Linear => Task::MultilabelCont,
    };
    let header = BundleHeader { task, n_disc: spec.n_disc, geometry: g };
    header.validate()?;

    let mut dir_rng = RngState::new(spec.seed).derive(0xD1);
    let u_fg = unit_vector(g.d_fg, &mut dir_rng);
    let u_vs = unit_vector(g.d_vs, &mut dir_rng);

    // Linear-mode label maps, drawn once.
    let mut label_rng = RngState::new(spec.seed).derive(0x1A);
    let disc_w: Vec<[f64; 3]> = (0..spec.n_disc)
        .map(|_| {
            [
                label_rng.next_gaussian(),
                label_rng.next_gaussian(),
                label_rng.next_gaussian(),
            ]
        })
        .collect();
    let cont_map: Vec<[f64; 3]> = (0..3)
        .map(|_| {
            [
                label_rng.next_gaussian(),
                label_rng.next_gaussian(),
                0.5 * label_rng.next_gaussian(),
            ]
        })
        .collect();

    let mut rng = RngState::new(spec.seed).derive(0x5A);
    let mut samples = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let z_fg: f64 = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
        let z_vs: f64 = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };

        let mut noise_tokens = |t: usize, d: usize| -> Vec<f64> {
            (0..t * d).map(|_| spec.noise_sigma * rng.next_gaussian()).collect()
        };
        let e_pe = noise_tokens(g.t_pe, g.d_pe);
        let mut e_fg = noise_tokens(g.t_fg, g.d_fg);
        let mut e_vs = noise_tokens(g.t_vs, g.d_vs);
        let plant = |tokens: &mut [f64], t: usize, d: usize, u: &[f64], z: f64, s: f64| {
            let k = t.div_ceil(4);
            for row in 0..k {
                for c in 0..d {
                    tokens[row * d + c] += s * z * u[c];
                }
            }
        };
        plant(&mut e_fg, g.t_fg, g.d_fg, &u_fg, z_fg, spec.signal_strength);
        plant(&mut e_vs, g.t_vs, g.d_vs, &u_vs, z_vs, spec.signal_strength);

        // Valid caption prefix; signal rows always fall inside it.
        let min_valid = (g.t_fg / 2).max(1).max(g.t_fg.div_ceil(4));
        let valid = min_valid + rng.next_below((g.t_fg - min_valid + 1) as u64) as usize;
        let mut fg_mask = vec![0u8; g.t_fg];
        fg_mask[..valid].iter_mut().for_each(|b| *b = 1);

        let label = match spec.mode {
            SynthMode::Xor => Label::Single(if z_fg == z_vs { 1 } else { 0 }),
            SynthMode::Linear => {
                let hidden = rng.next_gaussian();
                let y_disc: Vec<u8> = disc_w
                    .iter()
                    .map(|w| (w[0] * z_fg + w[1] * z_vs + w[2] * hidden > 0.0) as u8)
                    .collect();
                let mut y_cont = [0.0f32; 3];
                for (d, m) in cont_map.iter().enumerate() {
                    let raw = m[0] * z_fg + m[1] * z_vs + m[2];
                    y_cont[d] = (1.0 / (1.0 + (-raw).exp())) as f32;
                }
                Label::Multi { y_disc, y_cont }
            }
        };
        samples.push(BundleSample {
            e_pe: e_pe.iter().map(|&v| v as f32).collect(),
            e_fg: e_fg.iter().map(|&v| v as f32).collect(),
            e_vs: e_vs.iter().map(|&v| v as f32).collect(),
            fg_mask,
            label,
        });
    }
    Ok(Bundle { header, samples })
}

/// Split a bundle into disjoint contiguous slices of a seeded permutation.
pub fn split_dataset(bundle: &Bundle, fractions: &[f64], seed: u64) -> Result<Vec<Bundle>> {
    if fractions.is_empty() || fractions.iter().any(|&f| f <= 0.0) {
        return Err(McfError::Config("split fractions must be positive".into()));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(McfError::Config(format!("split fractions sum to {total} > 1")));
    }
    let n = bundle.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = RngState::new(seed).derive(0x59);
    rng.shuffle(&mut order);
    let mut out = Vec::with_capacity(fractions.len());
    let mut start = 0usize;
    let mut cum = 0.0;
    for &f in fractions {
        cum += f;
        let end = ((cum * n as f64).round() as usize).clamp(start, n);
        let samples: Vec<BundleSample> =
            order[start..end].iter().map(|&i| bundle.samples[i].clone()).collect();
        out.push(Bundle { header: bundle.header.clone(), samples });
        start = end;
    }
    Ok(out)
}
