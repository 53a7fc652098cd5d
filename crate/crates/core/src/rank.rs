//! Ranking utilities: merits, pseudo-merits, dominance scores, per-item rank
//! sets and stochastic-transitivity grading.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{num_pairs, zero_tolerance, PairIndexMap, Triad, TriadIndexMap};

/// A 0-based item index that displays and serializes with its 1-based label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Item(pub usize);

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0 + 1)
    }
}

impl Serialize for Item {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (self.0 + 1).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Item {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let label = usize::deserialize(d)?;
        if label == 0 {
            return Err(serde::de::Error::custom("item labels start at 1"));
        }
        Ok(Item(label - 1))
    }
}

fn items_of(nu: &DVector<f64>) -> Result<usize> {
    let p = nu.len();
    let k = ((1.0 + (1.0 + 8.0 * p as f64).sqrt()) / 2.0).round() as usize;
    if k < 3 || num_pairs(k) != p {
        return Err(Error::InvalidArgument(format!(
            "length {p} is not C(K,2) for any K >= 3"
        )));
    }
    Ok(k)
}

/// Row sums `mu*_i = sum_j nu_ij` of the antisymmetric profile.
pub fn pseudo_merits(nu: &DVector<f64>) -> Result<DVector<f64>> {
    let k = items_of(nu)?;
    let map = PairIndexMap::new(k);
    Ok(DVector::from_fn(k, |i, _| {
        (0..k)
            .filter(|&j| j != i)
            .map(|j| map.value(nu, i, j))
            .sum()
    }))
}

/// Ranks with 1 for the largest value; exact ties share their average rank.
pub fn descending_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let above = values.iter().filter(|w| *w > v).count() as f64;
            let equal = values.iter().filter(|w| *w == v).count() as f64;
            above + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Dominance scores and tie-broken ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    /// Number of items each item strictly beats.
    pub scores: Vec<usize>,
    /// Rank 1 is best; ties that survive recursive tie-breaking share their average rank.
    pub ranks: Vec<f64>,
}

/// Dominance scores `mu**_i = #{j : nu_ij > tol}`.
///
/// Ties are broken by recomputing the scores inside each tied group, as long
/// as that splits the group (at most `K` levels); remaining ties share
/// averaged ranks.
pub fn dominance_scores(nu: &DVector<f64>, tol: f64) -> Result<Dominance> {
    let k = items_of(nu)?;
    let map = PairIndexMap::new(k);
    let beats = |i: usize, j: usize| i != j && map.value(nu, i, j) > tol;
    let all: Vec<usize> = (0..k).collect();
    let scores: Vec<usize> = all
        .iter()
        .map(|&i| all.iter().filter(|&&j| beats(i, j)).count())
        .collect();
    let mut ranks = vec![0.0; k];
    rank_group(&all, 0, 1.0, k, &beats, &mut ranks);
    Ok(Dominance { scores, ranks })
}

fn rank_group(
    group: &[usize],
    depth: usize,
    first: f64,
    k: usize,
    beats: &dyn Fn(usize, usize) -> bool,
    ranks: &mut [f64],
) {
    let score = |i: usize| group.iter().filter(|&&j| beats(i, j)).count();
    let mut scored: Vec<(usize, usize)> = group.iter().map(|&i| (score(i), i)).collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut start = 0;
    while start < scored.len() {
        let end = start
            + scored[start..]
                .iter()
                .take_while(|s| s.0 == scored[start].0)
                .count();
        let tied: Vec<usize> = scored[start..end].iter().map(|s| s.1).collect();
        let lo = first + start as f64;
        if tied.len() == 1 {
            ranks[tied[0]] = lo;
        } else if tied.len() < group.len() && depth < k {
            rank_group(&tied, depth + 1, lo, k, beats, ranks);
        } else {
            let avg = lo + (tied.len() as f64 - 1.0) / 2.0;
            for i in tied {
                ranks[i] = avg;
            }
        }
        start = end;
    }
}

/// Items ranked above (`superior`), below (`inferior`) and level with
/// (`equivalent`) a given item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankSets {
    pub item: Item,
    pub superior: Vec<Item>,
    pub inferior: Vec<Item>,
    pub equivalent: Vec<Item>,
}

/// `S_i = {j : nu_ij < -tol}`, `I_i = {j : nu_ij > tol}`, `E_i` the rest.
pub fn rank_sets(nu: &DVector<f64>, tol: f64) -> Result<Vec<RankSets>> {
    let k = items_of(nu)?;
    let map = PairIndexMap::new(k);
    Ok((0..k)
        .map(|i| {
            let mut sets = RankSets {
                item: Item(i),
                superior: Vec::new(),
                inferior: Vec::new(),
                equivalent: Vec::new(),
            };
            for j in (0..k).filter(|&j| j != i) {
                let v = map.value(nu, i, j);
                if v < -tol {
                    sets.superior.push(Item(j));
                } else if v > tol {
                    sets.inferior.push(Item(j));
                } else {
                    sets.equivalent.push(Item(j));
                }
            }
            sets
        })
        .collect())
}

/// Transitivity grade of a triad or profile, strongest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Transitivity {
    /// Linear: the triad residual vanishes.
    #[serde(rename = "LST")]
    Linear,
    /// Strong: `nu_ac >= max(nu_ab, nu_bc)` along the preference order.
    #[serde(rename = "SST")]
    Strong,
    /// Weak: the preferences are ordered but not strongly.
    #[serde(rename = "WST")]
    Weak,
    #[serde(rename = "intransitive")]
    Cyclic,
}

impl fmt::Display for Transitivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transitivity::Linear => "LST",
            Transitivity::Strong => "SST",
            Transitivity::Weak => "WST",
            Transitivity::Cyclic => "intransitive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriadVerdict {
    pub triad: Triad,
    pub grade: Transitivity,
    /// For an intransitive triad, the cycle `a > b > c > a`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cycle: Option<[Item; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitivityReport {
    pub triads: Vec<TriadVerdict>,
    /// The weakest triad grade.
    pub global: Transitivity,
}

impl TransitivityReport {
    pub fn cyclic_triads(&self) -> impl Iterator<Item = &TriadVerdict> {
        self.triads
            .iter()
            .filter(|v| v.grade == Transitivity::Cyclic)
    }
}

const ORDERINGS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Grades one triad. Ties (`|nu| <= tol`) satisfy the weak inequalities.
pub fn grade_triad(nu: &DVector<f64>, map: &PairIndexMap, t: Triad, tol: f64) -> TriadVerdict {
    let items = t.items();
    let v = |a: usize, b: usize| map.value(nu, a, b);
    let residual = v(t.i, t.j) + v(t.j, t.k) + v(t.k, t.i);
    if residual.abs() <= tol {
        return TriadVerdict {
            triad: t,
            grade: Transitivity::Linear,
            cycle: None,
        };
    }
    let mut best = Transitivity::Cyclic;
    for ord in ORDERINGS {
        let (a, b, c) = (items[ord[0]], items[ord[1]], items[ord[2]]);
        let (ab, bc, ac) = (v(a, b), v(b, c), v(a, c));
        if ab >= -tol && bc >= -tol && ac >= -tol {
            let grade = if ac >= ab.max(bc) - tol {
                Transitivity::Strong
            } else {
                Transitivity::Weak
            };
            best = best.min(grade);
        }
    }
    let cycle = (best == Transitivity::Cyclic).then(|| {
        if v(t.i, t.j) > 0.0 {
            [Item(t.i), Item(t.j), Item(t.k)]
        } else {
            [Item(t.i), Item(t.k), Item(t.j)]
        }
    });
    TriadVerdict {
        triad: t,
        grade: best,
        cycle,
    }
}

/// Grades every triad of a profile; `tol` defaults to the scale-aware zero
/// tolerance when `None`.
pub fn classify_transitivity(nu: &DVector<f64>, tol: Option<f64>) -> Result<TransitivityReport> {
    let k = items_of(nu)?;
    let tol = tol.unwrap_or_else(|| zero_tolerance(nu));
    let map = PairIndexMap::new(k);
    let triads: Vec<TriadVerdict> = TriadIndexMap::new(k)
        .triads()
        .iter()
        .map(|t| grade_triad(nu, &map, *t, tol))
        .collect();
    let global = triads
        .iter()
        .map(|v| v.grade)
        .max()
        .unwrap_or(Transitivity::Linear);
    Ok(TransitivityReport { triads, global })
}

/// Whether an ordered partition of the items satisfies `group_a >= group_b`
/// for every pair of items in earlier/later groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionVerdict {
    pub holds: bool,
    /// Pairs `(earlier, later)` that violate the order.
    pub violations: Vec<(Item, Item)>,
}

pub fn partition_order(
    nu: &DVector<f64>,
    groups: &[Vec<usize>],
    tol: f64,
) -> Result<PartitionVerdict> {
    let k = items_of(nu)?;
    let mut seen = vec![false; k];
    for &i in groups.iter().flatten() {
        if i >= k {
            return Err(Error::IndexOutOfRange(format!(
                "item {} with K = {}",
                i + 1,
                k
            )));
        }
        if seen[i] {
            return Err(Error::RepeatedItem(i + 1));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidArgument(
            "groups must cover every item".into(),
        ));
    }
    let map = PairIndexMap::new(k);
    let mut violations = Vec::new();
    for (gi, upper) in groups.iter().enumerate() {
        for lower in &groups[gi + 1..] {
            for &a in upper {
                for &b in lower {
                    if map.value(nu, a, b) < -tol {
                        violations.push((Item(a), Item(b)));
                    }
                }
            }
        }
    }
    Ok(PartitionVerdict {
        holds: violations.is_empty(),
        violations,
    })
}
