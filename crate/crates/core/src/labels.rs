//! Performance classes from sorted times.
//!
//! Sorted times are convolved with a step kernel; a jump between two bands
//! of similar times shows up as a peak. Peaks whose prominence reaches a
//! percentile of all peak prominences become class boundaries.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_PERCENTILE: f64 = 98.0;
pub const MIN_RECORDS: usize = 3;

/// Class 1 is the fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Convolution values for input positions `offset..offset + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Convolution {
    pub offset: usize,
    pub values: Vec<f64>,
}

/// `c_i = sum(a[i+1..=i+r]) - sum(a[i-r+1..=i])` for `r < i < len - r`.
pub fn step_convolve(a: &[f64], r: usize) -> Result<Convolution> {
    if r == 0 || a.len() <= 2 * r {
        return Err(Error::TooShortForRadius {
            len: a.len(),
            radius: r,
        });
    }
    let values = (r + 1..a.len() - r)
        .map(|i| {
            let hi: f64 = a[i + 1..=i + r].iter().sum();
            let lo: f64 = a[i + 1 - r..=i].iter().sum();
            hi - lo
        })
        .collect();
    Ok(Convolution {
        offset: r + 1,
        values,
    })
}

/// 0.5% of the measurement count, at least 1.
pub fn default_radius(m: usize) -> usize {
    ((0.005 * m as f64).round() as usize).max(1)
}

/// Strict local maxima. A flat top is reported once, at its midpoint
/// (rounded down). Endpoints never qualify.
pub fn find_peaks(c: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    if c.len() < 3 {
        return peaks;
    }
    let mut i = 1;
    while i < c.len() - 1 {
        if c[i - 1] < c[i] {
            let mut ahead = i + 1;
            while ahead < c.len() - 1 && c[ahead] == c[i] {
                ahead += 1;
            }
            if c[ahead] < c[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

/// Topographic prominence of each peak: height above the higher of the
/// lowest points reached on either side before meeting higher ground.
pub fn prominences(c: &[f64], peaks: &[usize]) -> Vec<f64> {
    peaks
        .iter()
        .map(|&p| {
            let h = c[p];
            let mut left = h;
            for &x in c[..=p].iter().rev() {
                if x > h {
                    break;
                }
                left = left.min(x);
            }
            let mut right = h;
            for &x in &c[p..] {
                if x > h {
                    break;
                }
                right = right.min(x);
            }
            h - left.max(right)
        })
        .collect()
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = q.clamp(0.0, 100.0) / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (rank - lo as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelParams {
    pub radius: Option<usize>,
    pub percentile: f64,
}

impl Default for LabelParams {
    fn default() -> Self {
        LabelParams {
            radius: None,
            percentile: DEFAULT_PERCENTILE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfClass {
    pub id: ClassId,
    pub min: f64,
    pub max: f64,
    pub members: Vec<String>,
}

impl PerfClass {
    pub fn contains_time(&self, t: f64) -> bool {
        self.min <= t && t <= self.max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub sorted_keys: Vec<String>,
    pub sorted_times: Vec<f64>,
    /// Sorted-order index of the first member of every class but the first.
    pub boundaries: Vec<usize>,
    pub classes: Vec<PerfClass>,
    pub radius: usize,
    pub convolution: Convolution,
    /// Peak positions in sorted-order indices.
    pub peaks: Vec<usize>,
    pub prominences: Vec<f64>,
    pub threshold: Option<f64>,
    index: HashMap<String, ClassId>,
}

impl Labeling {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of(&self, key: &str) -> Option<ClassId> {
        self.index.get(key).copied()
    }

    pub fn class(&self, id: ClassId) -> Option<&PerfClass> {
        self.classes.get((id.0 as usize).checked_sub(1)?)
    }

    /// Labels in `dataset` iteration order.
    pub fn labels_for(&self, dataset: &Dataset) -> Result<Vec<ClassId>> {
        dataset
            .keys()
            .map(|k| {
                self.class_of(k)
                    .ok_or_else(|| Error::DagMismatch(format!("unlabeled schedule `{k}`")))
            })
            .collect()
    }

    /// `key \t seconds \t class`, fastest first.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("# key\tseconds\tclass\n");
        for (k, t) in self.sorted_keys.iter().zip(&self.sorted_times) {
            let _ = writeln!(s, "{k}\t{t}\t{}", self.index[k]);
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "# {} classes, radius {}, {} peaks, threshold {}\n# class\tmin\tmax\tcount\n",
            self.classes.len(),
            self.radius,
            self.peaks.len(),
            self.threshold.map_or("none".to_string(), |t| t.to_string()),
        );
        for c in &self.classes {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", c.id, c.min, c.max, c.members.len());
        }
        s
    }

    /// Columns for a sorted-times plot: index, time, class, convolution
    /// value (blank outside the kernel's full overlap), boundary marker.
    pub fn plot_data(&self) -> String {
        let mut s = String::from("# index\tseconds\tclass\tconvolution\tboundary\n");
        let conv = &self.convolution;
        for (i, (k, t)) in self.sorted_keys.iter().zip(&self.sorted_times).enumerate() {
            let c = i
                .checked_sub(conv.offset)
                .and_then(|j| conv.values.get(j))
                .map_or(String::new(), |v| v.to_string());
            let b = u8::from(self.boundaries.binary_search(&i).is_ok());
            let _ = writeln!(s, "{i}\t{t}\t{}\t{c}\t{b}", self.index[k]);
        }
        s
    }
}

/// Labels from already aggregated `(key, seconds)` pairs.
pub fn label_times(times: &[(String, f64)], params: &LabelParams) -> Result<Labeling> {
    if times.len() < MIN_RECORDS {
        return Err(Error::TooFewRecords {
            needed: MIN_RECORDS,
            got: times.len(),
        });
    }
    let mut sorted: Vec<&(String, f64)> = times.iter().collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let sorted_keys: Vec<String> = sorted.iter().map(|(k, _)| k.clone()).collect();
    let sorted_times: Vec<f64> = sorted.iter().map(|(_, t)| *t).collect();

    let radius = params.radius.unwrap_or_else(|| default_radius(times.len()));
    let convolution = step_convolve(&sorted_times, radius)?;
    let local = find_peaks(&convolution.values);
    let proms = prominences(&convolution.values, &local);
    let threshold = percentile(&proms, params.percentile);
    let mut boundaries: Vec<usize> = local
        .iter()
        .zip(&proms)
        .filter(|(_, &p)| threshold.is_some_and(|th| p >= th))
        .map(|(&i, _)| convolution.offset + i + 1)
        .collect();
    boundaries.dedup();

    let mut classes = Vec::with_capacity(boundaries.len() + 1);
    let mut index = HashMap::with_capacity(times.len());
    let mut edges = vec![0];
    edges.extend(&boundaries);
    edges.push(sorted_keys.len());
    for (c, w) in edges.windows(2).enumerate() {
        let id = ClassId(c as u32 + 1);
        let members = sorted_keys[w[0]..w[1]].to_vec();
        for m in &members {
            index.insert(m.clone(), id);
        }
        classes.push(PerfClass {
            id,
            min: sorted_times[w[0]],
            max: sorted_times[w[1] - 1],
            members,
        });
    }

    Ok(Labeling {
        sorted_keys,
        sorted_times,
        boundaries,
        classes,
        radius,
        peaks: local.iter().map(|&i| convolution.offset + i).collect(),
        convolution,
        prominences: proms,
        threshold,
        index,
    })
}

pub fn make_labels(dataset: &Dataset, params: &LabelParams) -> Result<Labeling> {
    let times: Vec<(String, f64)> = dataset.times().map(|(k, t)| (k.to_string(), t)).collect();
    label_times(&times, params)
}
