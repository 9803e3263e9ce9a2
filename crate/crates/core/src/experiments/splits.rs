//! Train/test split protocols. All splits are deterministic and index into
//! `Dataset::samples`.

use std::fmt;

use crate::error::{Error, Result};
use crate::imageio::Dataset;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// How a dataset is divided into folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Each subject is cut into `n` contiguous parts; fold `i` trains on part
    /// `i` and tests on the other `n - 1`.
    PaperNfold { n: usize },
    LeaveOneOut,
    /// First `train_count` samples of every subject train, the rest test.
    FixedSplit { train_count: usize },
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::PaperNfold { n } => write!(f, "paper-nfold(n={n})"),
            Protocol::LeaveOneOut => f.write_str("leave-one-out"),
            Protocol::FixedSplit { train_count } => write!(f, "fixed-split(train={train_count})"),
        }
    }
}

impl Protocol {
    pub fn splits(&self, dataset: &Dataset) -> Result<Vec<Split>> {
        match *self {
            Protocol::PaperNfold { n } => kfold_splits(dataset, n),
            Protocol::LeaveOneOut => leave_one_out_splits(dataset),
            Protocol::FixedSplit { train_count } => fixed_split(dataset, train_count).map(|s| vec![s]),
        }
    }
}

fn subjects(dataset: &Dataset) -> Vec<Vec<usize>> {
    dataset
        .indices_by_label()
        .into_iter()
        .filter(|g| !g.is_empty())
        .collect()
}

/// The inverted n-fold convention: one part trains, `n - 1` parts test.
pub fn kfold_splits(dataset: &Dataset, n: usize) -> Result<Vec<Split>> {
    if n < 2 {
        return Err(Error::Protocol(format!("paper-nfold needs n >= 2, got {n}")));
    }
    let groups = subjects(dataset);
    if groups.is_empty() {
        return Err(Error::Protocol("dataset is empty".into()));
    }
    if let Some((label, g)) = dataset
        .indices_by_label()
        .iter()
        .enumerate()
        .find(|(_, g)| !g.is_empty() && g.len() < n)
    {
        return Err(Error::Protocol(format!(
            "subject {} has {} samples, fewer than n = {n}",
            dataset.label_names.get(label).map_or("?", String::as_str),
            g.len()
        )));
    }
    let mut splits = vec![
        Split {
            train: Vec::new(),
            test: Vec::new()
        };
        n
    ];
    for g in &groups {
        let m = g.len();
        for part in 0..n {
            let (lo, hi) = (part * m / n, (part + 1) * m / n);
            for (fold, split) in splits.iter_mut().enumerate() {
                let dst = if fold == part { &mut split.train } else { &mut split.test };
                dst.extend_from_slice(&g[lo..hi]);
            }
        }
    }
    for s in &mut splits {
        s.train.sort_unstable();
        s.test.sort_unstable();
    }
    Ok(splits)
}

pub fn leave_one_out_splits(dataset: &Dataset) -> Result<Vec<Split>> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::Protocol(format!(
            "leave-one-out needs at least 2 samples, got {n}"
        )));
    }
    Ok((0..n)
        .map(|held| Split {
            train: (0..n).filter(|&i| i != held).collect(),
            test: vec![held],
        })
        .collect())
}

pub fn fixed_split(dataset: &Dataset, train_count: usize) -> Result<Split> {
    if train_count == 0 {
        return Err(Error::Protocol("fixed split needs train_count >= 1".into()));
    }
    let groups = subjects(dataset);
    if groups.is_empty() {
        return Err(Error::Protocol("dataset is empty".into()));
    }
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for g in &groups {
        if g.len() <= train_count {
            let label = dataset.samples[g[0]].label;
            return Err(Error::Protocol(format!(
                "subject {} has {} samples; fixed split needs more than {train_count}",
                dataset.label_names.get(label).map_or("?", String::as_str),
                g.len()
            )));
        }
        split.train.extend_from_slice(&g[..train_count]);
        split.test.extend_from_slice(&g[train_count..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::{GrayImage, Sample};

    fn dataset(per_subject: &[usize]) -> Dataset {
        let mut ds = Dataset::default();
        for (label, &m) in per_subject.iter().enumerate() {
            ds.label_names.push(format!("s{label}"));
            for j in 0..m {
                ds.samples.push(Sample {
                    image: GrayImage::filled(1, 1, 0).unwrap(),
                    label,
                    path: format!("s{label}/{j}.pgm").into(),
                });
            }
        }
        ds
    }

    fn assert_partition(ds: &Dataset, s: &Split) {
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
    }

    #[test]
    fn two_fold_halves_each_subject() {
        let ds = dataset(&[10, 10, 10]);
        let splits = kfold_splits(&ds, 2).unwrap();
        assert_eq!(splits.len(), 2);
        for s in &splits {
            assert_partition(&ds, s);
            for label in 0..3 {
                let count = |v: &[usize]| v.iter().filter(|&&i| ds.samples[i].label == label).count();
                assert_eq!((count(&s.train), count(&s.test)), (5, 5));
            }
        }
        assert_eq!(&splits[0].train[..5], &[0, 1, 2, 3, 4]);
        assert_eq!(&splits[1].train[..5], &[5, 6, 7, 8, 9]);
    }

    #[test]
    fn n_equal_to_sample_count() {
        let ds = dataset(&[4, 4]);
        let splits = kfold_splits(&ds, 4).unwrap();
        assert_eq!(splits.len(), 4);
        for s in &splits {
            assert_eq!(s.train.len(), 2);
            assert_partition(&ds, s);
        }
        assert!(kfold_splits(&ds, 5).is_err());
        assert!(kfold_splits(&ds, 1).is_err());
    }

    #[test]
    fn uneven_parts_stay_contiguous() {
        let ds = dataset(&[7]);
        let splits = kfold_splits(&ds, 3).unwrap();
        assert_eq!(splits[0].train, vec![0, 1]);
        assert_eq!(splits[1].train, vec![2, 3]);
        assert_eq!(splits[2].train, vec![4, 5, 6]);
    }

    #[test]
    fn leave_one_out() {
        let ds = dataset(&[2, 3]);
        let splits = leave_one_out_splits(&ds).unwrap();
        assert_eq!(splits.len(), 5);
        for (i, s) in splits.iter().enumerate() {
            assert_eq!(s.test, vec![i]);
            assert_eq!(s.train.len(), 4);
            assert_partition(&ds, s);
        }
        assert!(leave_one_out_splits(&dataset(&[1])).is_err());
        assert!(leave_one_out_splits(&Dataset::default()).is_err());
    }

    #[test]
    fn fixed_split_counts() {
        let ds = dataset(&[14, 14]);
        let s = fixed_split(&ds, 10).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (20, 8));
        assert_eq!(&s.train[..10], &(0..10).collect::<Vec<_>>()[..]);
        assert_partition(&ds, &s);
        let s = fixed_split(&ds, 13).unwrap();
        assert_eq!(s.test, vec![13, 27]);
        assert!(fixed_split(&ds, 0).is_err());
        assert!(fixed_split(&ds, 14).is_err());
    }

    #[test]
    fn protocol_errors_are_usage_errors() {
        let ds = dataset(&[3]);
        assert!(Protocol::PaperNfold { n: 5 }.splits(&ds).unwrap_err().is_usage());
    }
}
