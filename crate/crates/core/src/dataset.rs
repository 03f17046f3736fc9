//! Synthetic training sets stored as a manifest plus per-sequence MSEQ files.
//!
//! ```text
//! <dir>/manifest.txt
//! <dir>/seq_0000_syn.mseq     shaky input motions
//! <dir>/seq_0000_label.mseq   ground-truth stabilizing warps
//! ```
//!
//! Samples are not stored individually: every timestamp `t` in `[r, len-1]`
//! of every sequence is one sample, materialized on demand.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::motion::{GridGeometry, MotionField};
use crate::mseq;
use crate::synth::{self, MotionPairSample, TrajectoryConfig};

pub const MANIFEST_FORMAT: &str = "steadypath-dataset";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";

/// How many sequences to draw and from which trajectory family.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub geometry: GridGeometry,
    pub r: usize,
    pub sequences: usize,
    /// Shared by the stable and shaky sources; `seed` and `length` are
    /// overridden per sequence.
    pub trajectory: TrajectoryConfig,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            geometry: GridGeometry::default(),
            r: 15,
            sequences: 64,
            trajectory: TrajectoryConfig::default(),
            seed: 0,
        }
    }
}

/// Aligned shaky inputs and labels of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequencePair {
    pub syn: Vec<MotionField>,
    pub labels: Vec<MotionField>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub geometry: GridGeometry,
    pub r: usize,
    pub seed: u64,
    /// `(stable_seed, unstable_seed)` per sequence.
    pub sequence_seeds: Vec<(u64, u64)>,
    pub sequences: Vec<SequencePair>,
    index: Vec<(usize, usize)>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeds of the stable and shaky source of sequence `i`.
pub fn sequence_seeds(seed: u64, i: usize) -> (u64, u64) {
    let base = splitmix64(seed ^ splitmix64(i as u64));
    (splitmix64(base), splitmix64(base ^ 0x5555_5555_5555_5555))
}

impl Dataset {
    pub fn synthesize(spec: &DatasetSpec) -> Result<Self> {
        spec.trajectory.validate_for_window(spec.r)?;
        if spec.sequences == 0 {
            return Err(Error::Config("dataset needs at least one sequence".into()));
        }
        let mut sequences = Vec::with_capacity(spec.sequences);
        let mut seeds = Vec::with_capacity(spec.sequences);
        for i in 0..spec.sequences {
            let (s_stb, s_ust) = sequence_seeds(spec.seed, i);
            let stb = synth::gen_stable_motion(
                &TrajectoryConfig {
                    seed: s_stb,
                    ..spec.trajectory.clone()
                },
                spec.geometry,
            )?;
            let ust = synth::gen_unstable_motion(
                &TrajectoryConfig {
                    seed: s_ust,
                    ..spec.trajectory.clone()
                },
                spec.geometry,
            )?;
            let (syn, labels) = synth::synthesize_sequence(&stb, &ust)?;
            sequences.push(SequencePair { syn, labels });
            seeds.push((s_stb, s_ust));
        }
        Self::from_parts(spec.geometry, spec.r, spec.seed, seeds, sequences)
    }

    pub fn from_parts(
        geometry: GridGeometry,
        r: usize,
        seed: u64,
        sequence_seeds: Vec<(u64, u64)>,
        sequences: Vec<SequencePair>,
    ) -> Result<Self> {
        if sequence_seeds.len() != sequences.len() {
            return Err(Error::InvalidInput("one seed pair per sequence is required".into()));
        }
        let mut index = Vec::new();
        for (s, pair) in sequences.iter().enumerate() {
            if pair.syn.len() != pair.labels.len() {
                return Err(Error::InvalidInput(format!(
                    "sequence {s}: {} inputs but {} labels",
                    pair.syn.len(),
                    pair.labels.len()
                )));
            }
            for f in pair.syn.iter().chain(&pair.labels) {
                geometry.ensure_same(f.geometry())?;
            }
            index.extend(synth::sample_timestamps(pair.syn.len(), r)?.map(|t| (s, t)));
        }
        Ok(Dataset {
            geometry,
            r,
            seed,
            sequence_seeds,
            sequences,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// `(sequence, timestamp)` of sample `i`.
    pub fn locate(&self, i: usize) -> (usize, usize) {
        self.index[i]
    }

    pub fn sample(&self, i: usize) -> Result<MotionPairSample> {
        let (s, t) = self.index[i];
        let pair = &self.sequences[s];
        synth::sample_at(&pair.syn, &pair.labels, self.r, t)
    }

    pub fn manifest(&self) -> String {
        let g = &self.geometry;
        let mut out = String::new();
        let _ = writeln!(out, "format={MANIFEST_FORMAT}");
        let _ = writeln!(out, "version={MANIFEST_VERSION}");
        for (k, v) in [
            ("frame_width", g.frame_width),
            ("frame_height", g.frame_height),
            ("grid_width", g.grid_width),
            ("grid_height", g.grid_height),
            ("scale", g.scale),
            ("r", self.r),
            ("sequence_count", self.sequences.len()),
            ("sample_count", self.len()),
        ] {
            let _ = writeln!(out, "{k}={v}");
        }
        let lengths: Vec<String> = self.sequences.iter().map(|p| p.syn.len().to_string()).collect();
        let _ = writeln!(out, "sequence_lengths={}", lengths.join(","));
        let _ = writeln!(out, "seed={}", self.seed);
        let seeds: Vec<String> = self.sequence_seeds.iter().map(|(a, b)| format!("{a}:{b}")).collect();
        let _ = writeln!(out, "sequence_seeds={}", seeds.join(","));
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, pair) in self.sequences.iter().enumerate() {
            mseq::write_file(&dir.join(syn_file(i)), self.geometry, &pair.syn)?;
            mseq::write_file(&dir.join(label_file(i)), self.geometry, &pair.labels)?;
        }
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.manifest()).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let ctx = path.display().to_string();
        let m = Manifest::from_text(&text, &ctx)?;
        if m.get("format")? != MANIFEST_FORMAT {
            return Err(Error::format(&ctx, format!("not a dataset manifest: {}", m.get("format")?)));
        }
        let version: u32 = m.parse("version")?;
        if version != MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "dataset manifest",
                found: version,
                expected: MANIFEST_VERSION,
            });
        }
        let geometry = GridGeometry::with_frame(
            m.parse("frame_width")?,
            m.parse("frame_height")?,
            m.parse("grid_width")?,
            m.parse("grid_height")?,
            m.parse("scale")?,
        )
        .map_err(|e| Error::format(&ctx, e.to_string()))?;
        let r: usize = m.parse("r")?;
        let count: usize = m.parse("sequence_count")?;
        let seed: u64 = m.parse("seed")?;
        let lengths = m.list("sequence_lengths", count, |s| s.parse::<usize>().ok())?;
        let seeds = m.list("sequence_seeds", count, |s| {
            let (a, b) = s.split_once(':')?;
            Some((a.parse().ok()?, b.parse().ok()?))
        })?;
        let mut sequences = Vec::with_capacity(count);
        for (i, &len) in lengths.iter().enumerate() {
            let load = |name: String| -> Result<Vec<MotionField>> {
                let p = dir.join(name);
                let (g, fields) = mseq::read_file(&p)?;
                if g != geometry || fields.len() != len {
                    return Err(Error::format(
                        p.display().to_string(),
                        format!(
                            "expected {len} frames of {geometry}, found {} frames of {g}",
                            fields.len()
                        ),
                    ));
                }
                Ok(fields)
            };
            sequences.push(SequencePair {
                syn: load(syn_file(i))?,
                labels: load(label_file(i))?,
            });
        }
        let ds = Dataset::from_parts(geometry, r, seed, seeds, sequences)
            .map_err(|e| Error::format(&ctx, e.to_string()))?;
        let declared: usize = m.parse("sample_count")?;
        if declared != ds.len() {
            return Err(Error::format(
                &ctx,
                format!("manifest declares {declared} samples but sequences yield {}", ds.len()),
            ));
        }
        Ok(ds)
    }
}

pub fn syn_file(i: usize) -> String {
    format!("seq_{i:04}_syn.mseq")
}

pub fn label_file(i: usize) -> String {
    format!("seq_{i:04}_label.mseq")
}

/// Parsed `key=value` manifest.
struct Manifest<'a> {
    entries: BTreeMap<&'a str, &'a str>,
    context: &'a str,
}

impl<'a> Manifest<'a> {
    fn from_text(text: &'a str, context: &'a str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(context, format!("line {}: expected key=value", n + 1)))?;
            entries.insert(k.trim(), v.trim());
        }
        Ok(Manifest { entries, context })
    }

    fn get(&self, key: &str) -> Result<&'a str> {
        self.entries
            .get(key)
            .copied()
            .ok_or_else(|| Error::format(self.context, format!("missing key {key}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::format(self.context, format!("bad value for {key}: {v:?}")))
    }

    fn list<T>(&self, key: &str, count: usize, item: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
        let raw = self.get(key)?;
        let parts: Vec<&str> = if raw.is_empty() { Vec::new() } else { raw.split(',').collect() };
        if parts.len() != count {
            return Err(Error::format(
                self.context,
                format!("{key} lists {} entries, expected {count}", parts.len()),
            ));
        }
        parts
            .into_iter()
            .map(|p| item(p).ok_or_else(|| Error::format(self.context, format!("bad entry {p:?} in {key}"))))
            .collect()
    }
}
