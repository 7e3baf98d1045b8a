use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_3, FRAC_PI_6, PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Camera distance used for every generated sample.
pub const SAMPLE_DISTANCE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split {s:?}"))),
        }
    }
}

/// How sample azimuths are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AzimuthMode {
    #[default]
    Uniform,
    /// Three quarters of the samples cluster around azimuth zero.
    Biased,
}

impl FromStr for AzimuthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "biased" => Ok(Self::Biased),
            _ => Err(Error::invalid(format!("unknown azimuth mode {s:?}"))),
        }
    }
}

/// Everything needed to regenerate one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: u64,
    pub class_id: u32,
    pub split: Split,
    pub pose: Pose,
    pub background_seed: u64,
}

/// Draws one canonical pose from the benchmark distribution.
pub fn random_pose<R: Rng + ?Sized>(rng: &mut R, mode: AzimuthMode) -> Pose {
    let azimuth = match mode {
        AzimuthMode::Uniform => rng.random_range(0.0..TAU),
        AzimuthMode::Biased if rng.random_bool(0.75) => {
            let n: f64 = rng.sample(StandardNormal);
            (n * PI / 8.0).rem_euclid(TAU)
        }
        AzimuthMode::Biased => rng.random_range(0.0..TAU),
    };
    Pose::new(
        azimuth,
        rng.random_range(-FRAC_PI_3..=FRAC_PI_3),
        rng.random_range(-FRAC_PI_6..=FRAC_PI_6),
        SAMPLE_DISTANCE,
    )
    .canonical()
}

/// Per class: `per_class_train` training records followed by
/// `per_class_test` test records, with ids assigned consecutively.
pub fn generate_records(
    num_classes: usize,
    per_class_train: usize,
    per_class_test: usize,
    seed: u64,
    mode: AzimuthMode,
) -> Vec<SampleRecord> {
    let mut out = Vec::with_capacity(num_classes * (per_class_train + per_class_test));
    let mut id = 0u64;
    for c in 0..num_classes as u32 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x3c6e_f372_fe94_f82b) ^ c as u64);
        let splits = std::iter::repeat_n(Split::Train, per_class_train)
            .chain(std::iter::repeat_n(Split::Test, per_class_test));
        for split in splits {
            out.push(SampleRecord {
                id,
                class_id: c,
                split,
                pose: random_pose(&mut rng, mode),
                background_seed: rng.random(),
            });
            id += 1;
        }
    }
    out
}

/// Task sizes for a split such as `B0+2`, `B50+10` or `4,2,2`.
pub fn parse_split(spec: &str, num_classes: usize) -> Result<Vec<usize>> {
    let bad = |why: &str| Error::invalid(format!("split {spec:?} on {num_classes} classes: {why}"));
    let spec = spec.trim();
    let sizes = if let Some(rest) = spec.strip_prefix(['B', 'b']) {
        let (base, inc) = rest.split_once('+').ok_or_else(|| bad("expected B<base>+<step>"))?;
        let base: usize = base.parse().map_err(|_| bad("base is not a number"))?;
        let inc: usize = inc.parse().map_err(|_| bad("step is not a number"))?;
        if inc == 0 || base > num_classes || !(num_classes - base).is_multiple_of(inc) {
            return Err(bad("classes do not divide into tasks"));
        }
        let mut sizes = Vec::new();
        if base > 0 {
            sizes.push(base);
        }
        sizes.extend(std::iter::repeat_n(inc, (num_classes - base) / inc));
        sizes
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| bad("expected sizes like 4,2,2")))
            .collect::<Result<Vec<_>>>()?
    };
    if sizes.is_empty() || sizes.contains(&0) || sizes.iter().sum::<usize>() != num_classes {
        return Err(bad("task sizes must be positive and sum to the class count"));
    }
    Ok(sizes)
}

/// Shuffles `classes` with `seed` and cuts them into tasks per `spec`.
pub fn split_classes(classes: &[u32], spec: &str, seed: u64) -> Result<Vec<Vec<u32>>> {
    let sizes = parse_split(spec, classes.len())?;
    let mut order = classes.to_vec();
    order.sort_unstable();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5b11_7a5c));
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for n in sizes {
        let mut task = order[start..start + n].to_vec();
        task.sort_unstable();
        out.push(task);
        start += n;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSplit {
    pub classes: Vec<u32>,
    pub train: Vec<u64>,
    pub test: Vec<u64>,
}

/// Ordered class-incremental tasks over a set of sample records.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSequence {
    pub tasks: Vec<TaskSplit>,
    pub records: Vec<SampleRecord>,
}

impl TaskSequence {
    pub fn from_records(records: Vec<SampleRecord>, spec: &str, seed: u64) -> Result<Self> {
        let classes: Vec<u32> = records
            .iter()
            .map(|r| r.class_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let tasks = split_classes(&classes, spec, seed)?
            .into_iter()
            .map(|classes| {
                let pick = |split| {
                    records
                        .iter()
                        .filter(|r| r.split == split && classes.contains(&r.class_id))
                        .map(|r| r.id)
                        .collect()
                };
                TaskSplit {
                    train: pick(Split::Train),
                    test: pick(Split::Test),
                    classes,
                }
            })
            .collect();
        Ok(Self { tasks, records })
    }

    /// Classes introduced by tasks `0..=task`.
    pub fn classes_up_to(&self, task: usize) -> Vec<u32> {
        let mut out: Vec<u32> = self.tasks[..=task]
            .iter()
            .flat_map(|t| t.classes.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

pub fn build_task_sequence(
    num_classes: usize,
    split_spec: &str,
    per_class_train: usize,
    per_class_test: usize,
    seed: u64,
) -> Result<TaskSequence> {
    parse_split(split_spec, num_classes)?;
    let records = generate_records(
        num_classes,
        per_class_train,
        per_class_test,
        seed,
        AzimuthMode::Uniform,
    );
    TaskSequence::from_records(records, split_spec, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_arithmetic() {
        assert_eq!(parse_split("B0+2", 8).unwrap(), vec![2; 4]);
        assert_eq!(parse_split("B0+3", 12).unwrap(), vec![3; 4]);
        assert_eq!(parse_split("B50+10", 100).unwrap(), vec![50, 10, 10, 10, 10, 10]);
        assert_eq!(parse_split("4,2,2", 8).unwrap(), vec![4, 2, 2]);
        assert!(parse_split("B0+3", 8).is_err());
        assert!(parse_split("4,2", 8).is_err());
        assert!(parse_split("B0+0", 8).is_err());
        assert!(parse_split("nonsense", 8).is_err());
    }

    #[test]
    fn sequence_is_disjoint_and_complete() {
        let seq = build_task_sequence(8, "B0+2", 10, 4, 3).unwrap();
        assert_eq!(seq.tasks.len(), 4);
        let mut seen = BTreeSet::new();
        for t in &seq.tasks {
            for c in &t.classes {
                assert!(seen.insert(*c));
            }
            assert_eq!(t.train.len(), 20);
            assert_eq!(t.test.len(), 8);
            assert!(t.train.iter().all(|id| !t.test.contains(id)));
        }
        assert_eq!(seen.len(), 8);
        assert_eq!(seq.classes_up_to(3), (0..8).collect::<Vec<_>>());
        assert_eq!(seq, build_task_sequence(8, "B0+2", 10, 4, 3).unwrap());
    }

    #[test]
    fn poses_stay_in_the_sampling_box() {
        for r in generate_records(3, 50, 0, 1, AzimuthMode::Uniform) {
            assert!((0.0..TAU).contains(&r.pose.azimuth));
            assert!(r.pose.elevation.abs() <= FRAC_PI_3);
            let roll = if r.pose.roll > PI { r.pose.roll - TAU } else { r.pose.roll };
            assert!(roll.abs() <= FRAC_PI_6 + 1e-12);
            assert!(r.pose.is_canonical());
        }
    }

    #[test]
    fn biased_mode_concentrates_azimuth() {
        let recs = generate_records(1, 400, 0, 2, AzimuthMode::Biased);
        let near = recs
            .iter()
            .filter(|r| r.pose.azimuth < PI / 4.0 || r.pose.azimuth > TAU - PI / 4.0)
            .count();
        assert!(near > 200, "{near}");
    }
}
