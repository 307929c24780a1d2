//! The metapopulation model: patches, habitat qualities and dispersal.
//!
//! A [`PatchGraph`] is only shape-checked at construction. The standing
//! assumptions (row-stochastic, primitive dispersal; nonnegative means) are
//! checked by [`PatchGraph::validate`], so deliberately degenerate graphs can
//! still be built for negative tests. Every analytic operation calls
//! [`PatchGraph::ensure_valid`] first.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// Tolerance on dispersal row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Habitat label used for sources by the builders.
pub const SOURCE: usize = 1;
/// Habitat label used for sinks by the builders.
pub const SINK: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGraph {
    habitat_of: Vec<usize>,
    dispersal: DMatrix<f64>,
    mean_offspring: BTreeMap<usize, f64>,
}

/// Mean offspring matrix `A[i][j] = m(habitat(i)) · d[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanOffspringMatrix(pub DMatrix<f64>);

impl MeanOffspringMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { patch: usize, sum: f64 },
    EntryOutOfRange { from: usize, to: usize, value: f64 },
    NotPrimitive,
    NegativeMean { habitat: usize, mean: f64 },
    NonFiniteMean { habitat: usize },
    MissingMean { habitat: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-based patch labels in messages
        match self {
            Violation::RowSum { patch, sum } => {
                write!(f, "row-stochasticity: row of patch {} sums to {sum}", patch + 1)
            }
            Violation::EntryOutOfRange { from, to, value } => write!(
                f,
                "dispersal entry ({}, {}) = {value} outside [0, 1]",
                from + 1,
                to + 1
            ),
            Violation::NotPrimitive => write!(
                f,
                "dispersal chain is not primitive (reducible or periodic)"
            ),
            Violation::NegativeMean { habitat, mean } => {
                write!(f, "habitat {habitat} has negative mean offspring {mean}")
            }
            Violation::NonFiniteMean { habitat } => {
                write!(f, "habitat {habitat} has a non-finite mean offspring")
            }
            Violation::MissingMean { habitat } => {
                write!(f, "habitat {habitat} has no mean offspring value")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

impl PatchGraph {
    /// Builds a graph from habitat labels (1-based), dispersal rows and the
    /// mean offspring number of each habitat label. Only shapes are checked.
    pub fn new(
        habitat_of: Vec<usize>,
        dispersal: Vec<Vec<f64>>,
        mean_offspring: BTreeMap<usize, f64>,
    ) -> Result<Self> {
        let k = habitat_of.len();
        if k == 0 {
            return Err(Error::InvalidGraph("graph has no patches".into()));
        }
        if dispersal.len() != k || dispersal.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidGraph(format!(
                "dispersal must be a {k}x{k} matrix"
            )));
        }
        if let Some(pos) = habitat_of.iter().position(|&h| h == 0) {
            return Err(Error::InvalidGraph(format!(
                "patch {} has habitat label 0; labels start at 1",
                pos + 1
            )));
        }
        let dispersal = DMatrix::from_fn(k, k, |i, j| dispersal[i][j]);
        Ok(Self {
            habitat_of,
            dispersal,
            mean_offspring,
        })
    }

    pub fn from_matrix(
        habitat_of: Vec<usize>,
        dispersal: DMatrix<f64>,
        mean_offspring: BTreeMap<usize, f64>,
    ) -> Result<Self> {
        let rows: Vec<Vec<f64>> = dispersal
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        Self::new(habitat_of, rows, mean_offspring)
    }

    pub fn num_patches(&self) -> usize {
        self.habitat_of.len()
    }

    pub fn habitat_of(&self, patch: usize) -> usize {
        self.habitat_of[patch]
    }

    pub fn habitats(&self) -> &[usize] {
        &self.habitat_of
    }

    pub fn dispersal(&self) -> &DMatrix<f64> {
        &self.dispersal
    }

    pub fn dispersal_rows(&self) -> Vec<Vec<f64>> {
        self.dispersal
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    pub fn mean_offspring(&self) -> &BTreeMap<usize, f64> {
        &self.mean_offspring
    }

    /// Mean offspring of the habitat of `patch` (NaN if undefined).
    pub fn patch_mean(&self, patch: usize) -> f64 {
        self.mean_offspring
            .get(&self.habitat_of[patch])
            .copied()
            .unwrap_or(f64::NAN)
    }

    pub fn patch_means(&self) -> Vec<f64> {
        (0..self.num_patches()).map(|i| self.patch_mean(i)).collect()
    }

    /// Same geometry with a different habitat → mean map.
    pub fn with_means(&self, mean_offspring: BTreeMap<usize, f64>) -> Self {
        Self {
            habitat_of: self.habitat_of.clone(),
            dispersal: self.dispersal.clone(),
            mean_offspring,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let k = self.num_patches();
        let mut violations = Vec::new();
        for i in 0..k {
            let sum: f64 = self.dispersal.row(i).iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                violations.push(Violation::RowSum { patch: i, sum });
            }
            for j in 0..k {
                let v = self.dispersal[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    violations.push(Violation::EntryOutOfRange {
                        from: i,
                        to: j,
                        value: v,
                    });
                }
            }
        }
        if !linalg::is_primitive(&self.dispersal) {
            violations.push(Violation::NotPrimitive);
        }
        let mut used: Vec<usize> = self.habitat_of.clone();
        used.sort_unstable();
        used.dedup();
        for h in used {
            match self.mean_offspring.get(&h) {
                None => violations.push(Violation::MissingMean { habitat: h }),
                Some(m) if !m.is_finite() => {
                    violations.push(Violation::NonFiniteMean { habitat: h })
                }
                Some(&m) if m < 0.0 => violations.push(Violation::NegativeMean {
                    habitat: h,
                    mean: m,
                }),
                _ => {}
            }
        }
        ValidationReport { violations }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidGraph(report.to_string()))
        }
    }

    /// `A[i][j] = m(habitat(i)) · d[i][j]`.
    pub fn mean_matrix(&self) -> Result<MeanOffspringMatrix> {
        self.ensure_valid()?;
        Ok(self.mean_matrix_unchecked())
    }

    pub(crate) fn mean_matrix_unchecked(&self) -> MeanOffspringMatrix {
        let means = self.patch_means();
        let k = self.num_patches();
        MeanOffspringMatrix(DMatrix::from_fn(k, k, |i, j| {
            means[i] * self.dispersal[(i, j)]
        }))
    }

    /// First patch whose habitat mean is maximal.
    pub fn reference_source(&self) -> usize {
        let means = self.patch_means();
        let mut best = 0;
        for (i, &m) in means.iter().enumerate() {
            if m > means[best] {
                best = i;
            }
        }
        best
    }

    /// Patches carrying the given habitat label.
    pub fn patches_with_habitat(&self, habitat: usize) -> Vec<usize> {
        (0..self.num_patches())
            .filter(|&i| self.habitat_of[i] == habitat)
            .collect()
    }
}

fn check_open_prob(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {v} must lie strictly between 0 and 1"
        )))
    }
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must lie in [0, 1]")))
    }
}

fn check_mean(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {v} must be a finite nonnegative mean"
        )))
    }
}

fn source_sink_means(big_m: f64, small_m: f64) -> BTreeMap<usize, f64> {
    BTreeMap::from([(SOURCE, big_m), (SINK, small_m)])
}

/// One source (patch 0, mean `big_m`) and one sink (patch 1, mean `small_m`)
/// with `p = d12`, `q = d21`.
pub fn build_two_patch(big_m: f64, small_m: f64, p: f64, q: f64) -> Result<PatchGraph> {
    check_mean("M", big_m)?;
    check_mean("m", small_m)?;
    check_open_prob("p", p)?;
    check_open_prob("q", q)?;
    PatchGraph::new(
        vec![SOURCE, SINK],
        vec![vec![1.0 - p, p], vec![q, 1.0 - q]],
        source_sink_means(big_m, small_m),
    )
}

/// Parameters of a source closed onto itself by a pipeline of `n` sinks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CyclePipeline {
    pub n: usize,
    /// Total dispersal probability out of the source.
    pub p: f64,
    #[serde(rename = "L")]
    pub left_share: f64,
    #[serde(rename = "R")]
    pub right_share: f64,
    /// Stay-put probability in a sink.
    pub s: f64,
    /// Sink step toward lower positions along the pipe.
    pub l: f64,
    /// Sink step toward higher positions along the pipe.
    pub r: f64,
    #[serde(rename = "M")]
    pub source_mean: f64,
    #[serde(rename = "m")]
    pub sink_mean: f64,
}

impl CyclePipeline {
    pub fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("pipeline needs n >= 1 sinks".into()));
        }
        check_open_prob("p", self.p)?;
        check_open_prob("s", self.s)?;
        check_prob("L", self.left_share)?;
        check_prob("R", self.right_share)?;
        check_prob("l", self.l)?;
        check_prob("r", self.r)?;
        check_mean("M", self.source_mean)?;
        check_mean("m", self.sink_mean)?;
        if (self.left_share + self.right_share - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "L + R = {} must equal 1",
                self.left_share + self.right_share
            )));
        }
        if (self.s + self.l + self.r - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "s + l + r = {} must equal 1",
                self.s + self.l + self.r
            )));
        }
        Ok(())
    }
}

/// Source at patch 0 and sinks at patches `1..=n` around a cycle.
///
/// Positions increase to the right and positions 0 and `n+1` are the
/// source. The source stays with `1−p`, jumps right to sink 1 with `pR` and
/// left to sink `n` with `pL`. Sink `k` stays with `s`, steps right to `k+1`
/// with `r` and left to `k−1` with `l`.
pub fn build_cycle_pipeline(c: &CyclePipeline) -> Result<PatchGraph> {
    c.check()?;
    let n = c.n;
    let k = n + 1;
    let mut d = vec![vec![0.0; k]; k];
    d[0][0] = 1.0 - c.p;
    d[0][1] += c.p * c.right_share;
    d[0][n] += c.p * c.left_share;
    for pos in 1..=n {
        let up = if pos == n { 0 } else { pos + 1 };
        let down = pos - 1;
        d[pos][pos] += c.s;
        d[pos][up] += c.r;
        d[pos][down] += c.l;
    }
    let mut habitats = vec![SINK; k];
    habitats[0] = SOURCE;
    PatchGraph::new(habitats, d, source_sink_means(c.source_mean, c.sink_mean))
}

/// Finite motif families obtained by collapsing source-transitive graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motif {
    /// Infinite chessboard, sources on one color. Each cell stays with
    /// `sigma` and moves to each of its 4 neighbours with `(1−sigma)/4`.
    Chessboard {
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(rename = "M")]
        source_mean: f64,
        #[serde(rename = "m")]
        sink_mean: f64,
    },
    /// Star sources with `2d` pipelines of `n` isotropic sinks.
    Star {
        d: usize,
        n: usize,
        p: f64,
        s: f64,
        #[serde(rename = "M")]
        source_mean: f64,
        #[serde(rename = "m")]
        sink_mean: f64,
    },
    /// Infinite line whose habitat types repeat with the given pattern.
    PeriodicArray {
        pattern: Vec<usize>,
        #[serde(deserialize_with = "habitat_keyed")]
        means: BTreeMap<usize, f64>,
        stay: f64,
        left: f64,
        right: f64,
    },
}

// Tagged enums buffer their content, which loses integer parsing of map
// keys, so habitat labels are read as strings here.
fn habitat_keyed<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<usize, f64>, D::Error> {
    let raw = BTreeMap::<String, f64>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<usize>()
                .map(|h| (h, v))
                .map_err(|_| serde::de::Error::custom(format!("habitat label {k:?} is not a positive integer")))
        })
        .collect()
}

fn default_sigma() -> f64 {
    0.2
}

/// Collapses a finite cover graph onto its classes: the motif row of class
/// `c` is the row of `representative[c]` summed within each class.
pub fn lump(
    cover: &[Vec<f64>],
    class_of: &[usize],
    representative: &[usize],
) -> Vec<Vec<f64>> {
    let n_classes = representative.len();
    let mut out = vec![vec![0.0; n_classes]; n_classes];
    for (c, &rep) in representative.iter().enumerate() {
        for (q, &w) in cover[rep].iter().enumerate() {
            out[c][class_of[q]] += w;
        }
    }
    out
}

pub fn build_motif(motif: &Motif) -> Result<PatchGraph> {
    match motif {
        Motif::Chessboard {
            sigma,
            source_mean,
            sink_mean,
        } => {
            check_prob("sigma", *sigma)?;
            check_mean("M", *source_mean)?;
            check_mean("m", *sink_mean)?;
            // 2x2 torus cover; cell (x, y) has color (x + y) % 2
            let cell = |x: usize, y: usize| (x % 2) * 2 + (y % 2);
            let mut cover = vec![vec![0.0; 4]; 4];
            for x in 0..2 {
                for y in 0..2 {
                    let here = cell(x, y);
                    cover[here][here] += sigma;
                    let mv = (1.0 - sigma) / 4.0;
                    for nb in [
                        cell(x + 1, y),
                        cell(x + 1, y), // x − 1 ≡ x + 1 on a period-2 torus
                        cell(x, y + 1),
                        cell(x, y + 1),
                    ] {
                        cover[here][nb] += mv;
                    }
                }
            }
            let class_of: Vec<usize> = (0..4).map(|c| (c / 2 + c % 2) % 2).collect();
            let rows = lump(&cover, &class_of, &[cell(0, 0), cell(0, 1)]);
            PatchGraph::new(
                vec![SOURCE, SINK],
                rows,
                source_sink_means(*source_mean, *sink_mean),
            )
        }
        Motif::Star {
            d,
            n,
            p,
            s,
            source_mean,
            sink_mean,
        } => {
            if *d == 0 || *n == 0 {
                return Err(Error::InvalidParameter(
                    "star needs d >= 1 pipeline pairs and n >= 1 sinks per pipeline".into(),
                ));
            }
            check_open_prob("p", *p)?;
            check_prob("s", *s)?;
            check_mean("M", *source_mean)?;
            check_mean("m", *sink_mean)?;
            let k = 1 + d * n;
            let mut rows = vec![vec![0.0; k]; k];
            rows[0][0] = 1.0 - p;
            let arm = p / (2.0 * *d as f64);
            let step = (1.0 - s) / 2.0;
            for c in 0..*d {
                let first = 1 + c * n;
                let last = first + n - 1;
                // both ends of a collapsed pipeline are arms of the source
                rows[0][first] += arm;
                rows[0][last] += arm;
                for pos in 0..*n {
                    let here = first + pos;
                    let down = if pos == 0 { 0 } else { here - 1 };
                    let up = if pos + 1 == *n { 0 } else { here + 1 };
                    rows[here][here] += s;
                    rows[here][down] += step;
                    rows[here][up] += step;
                }
            }
            let mut habitats = vec![SINK; k];
            habitats[0] = SOURCE;
            PatchGraph::new(habitats, rows, source_sink_means(*source_mean, *sink_mean))
        }
        Motif::PeriodicArray {
            pattern,
            means,
            stay,
            left,
            right,
        } => {
            let period = pattern.len();
            if period == 0 {
                return Err(Error::InvalidParameter("empty periodic pattern".into()));
            }
            check_prob("stay", *stay)?;
            check_prob("left", *left)?;
            check_prob("right", *right)?;
            if (stay + left + right - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidParameter(format!(
                    "stay + left + right = {} must equal 1",
                    stay + left + right
                )));
            }
            for (&h, &m) in means {
                check_mean(&format!("mean of habitat {h}"), m)?;
            }
            // cycle of two periods as cover, classes by position mod period
            let cover_len = 2 * period;
            let mut cover = vec![vec![0.0; cover_len]; cover_len];
            for i in 0..cover_len {
                cover[i][i] += stay;
                cover[i][(i + 1) % cover_len] += right;
                cover[i][(i + cover_len - 1) % cover_len] += left;
            }
            let class_of: Vec<usize> = (0..cover_len).map(|i| i % period).collect();
            let reps: Vec<usize> = (0..period).collect();
            let rows = lump(&cover, &class_of, &reps);
            PatchGraph::new(pattern.clone(), rows, means.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_patch_is_valid() {
        let g = build_two_patch(2.0, 0.5, 0.5, 0.5).unwrap();
        assert!(g.validate().is_valid());
        let g = build_two_patch(1.5, 0.9, 0.3, 0.6).unwrap();
        for row in g.dispersal_rows() {
            assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_patch_rejects_degenerate_probabilities() {
        let err = build_two_patch(2.0, 0.5, 1.0, 0.5).unwrap_err();
        assert!(err.to_string().contains("p = 1"));
        assert!(build_two_patch(2.0, 0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn periodic_chain_is_invalid() {
        let g = PatchGraph::new(
            vec![1, 2],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            BTreeMap::from([(1, 2.0), (2, 0.5)]),
        )
        .unwrap();
        let report = g.validate();
        assert_eq!(report.violations, vec![Violation::NotPrimitive]);
        assert!(g.mean_matrix().is_err());
    }

    #[test]
    fn row_sum_violation_is_reported() {
        let g = PatchGraph::new(
            vec![1, 2, 2],
            vec![
                vec![0.5, 0.25, 0.24],
                vec![0.3, 0.4, 0.3],
                vec![0.2, 0.2, 0.6],
            ],
            BTreeMap::from([(1, 2.0), (2, 0.5)]),
        )
        .unwrap();
        let report = g.validate();
        assert!(matches!(
            report.violations.as_slice(),
            [Violation::RowSum { patch: 0, .. }]
        ));
    }

    #[test]
    fn missing_and_negative_means() {
        let g = PatchGraph::new(
            vec![1, 3],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            BTreeMap::from([(1, -1.0)]),
        )
        .unwrap();
        let v = g.validate().violations;
        assert!(v.contains(&Violation::NegativeMean { habitat: 1, mean: -1.0 }));
        assert!(v.contains(&Violation::MissingMean { habitat: 3 }));
    }

    #[test]
    fn shape_errors() {
        assert!(PatchGraph::new(vec![], vec![], BTreeMap::new()).is_err());
        assert!(PatchGraph::new(vec![1, 1], vec![vec![1.0]], BTreeMap::new()).is_err());
        assert!(PatchGraph::new(vec![0], vec![vec![1.0]], BTreeMap::new()).is_err());
    }

    #[test]
    fn mean_matrix_two_patch() {
        let g = build_two_patch(2.0, 0.5, 0.5, 0.5).unwrap();
        let a = g.mean_matrix().unwrap();
        let expect = [[1.0, 1.0], [0.25, 0.25]];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a.entry(i, j), expect[i][j]);
            }
        }
    }

    #[test]
    fn unit_means_give_dispersal_and_sterile_rows_vanish() {
        let g = build_two_patch(1.0, 1.0, 0.3, 0.6).unwrap();
        assert_eq!(g.mean_matrix().unwrap().0, *g.dispersal());
        let g = build_two_patch(2.0, 0.0, 0.3, 0.6).unwrap();
        let a = g.mean_matrix().unwrap();
        assert_eq!(a.entry(1, 0), 0.0);
        assert_eq!(a.entry(1, 1), 0.0);
    }

    fn pipeline(n: usize, l: f64, r: f64, s: f64) -> CyclePipeline {
        CyclePipeline {
            n,
            p: 0.3,
            left_share: 0.5,
            right_share: 0.5,
            s,
            l,
            r,
            source_mean: 2.0,
            sink_mean: 0.5,
        }
    }

    #[test]
    fn pipeline_with_one_sink_collapses_to_two_patches() {
        let g = build_cycle_pipeline(&pipeline(1, 0.4, 0.4, 0.2)).unwrap();
        assert_eq!(g.num_patches(), 2);
        assert_relative_eq!(g.dispersal()[(1, 0)], 0.8, epsilon = 1e-15);
        assert_relative_eq!(g.dispersal()[(0, 1)], 0.3, epsilon = 1e-15);
        assert!(g.validate().is_valid());
    }

    #[test]
    fn pipeline_of_seven_sinks() {
        let g = build_cycle_pipeline(&pipeline(7, 0.3, 0.5, 0.2)).unwrap();
        assert_eq!(g.num_patches(), 8);
        assert!(g.validate().is_valid());
        assert_eq!(g.patches_with_habitat(SINK).len(), 7);
    }

    #[test]
    fn isotropic_pipeline_is_mirror_symmetric() {
        let g = build_cycle_pipeline(&pipeline(5, 0.4, 0.4, 0.2)).unwrap();
        let d = g.dispersal();
        // reflection k -> n + 1 - k (mod n + 1) maps the chain onto itself
        let n = 5;
        let mirror = |k: usize| if k == 0 { 0 } else { n + 1 - k };
        for i in 0..=n {
            for j in 0..=n {
                assert_relative_eq!(d[(i, j)], d[(mirror(i), mirror(j))], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn pipeline_weight_errors() {
        let mut c = pipeline(3, 0.4, 0.4, 0.2);
        c.left_share = 0.6;
        assert!(build_cycle_pipeline(&c).is_err());
        let c = pipeline(3, 0.4, 0.5, 0.2);
        assert!(build_cycle_pipeline(&c).is_err());
    }

    #[test]
    fn chessboard_collapses_to_two_vertices() {
        let g = build_motif(&Motif::Chessboard {
            sigma: 0.2,
            source_mean: 2.0,
            sink_mean: 0.5,
        })
        .unwrap();
        assert_eq!(g.num_patches(), 2);
        assert_relative_eq!(g.dispersal()[(0, 1)], 0.8, epsilon = 1e-15);
        assert_relative_eq!(g.dispersal()[(1, 0)], 0.8, epsilon = 1e-15);
        assert!(g.validate().is_valid());
    }

    #[test]
    fn chessboard_without_loops_is_reported() {
        let g = build_motif(&Motif::Chessboard {
            sigma: 0.0,
            source_mean: 2.0,
            sink_mean: 0.5,
        })
        .unwrap();
        assert_eq!(g.validate().violations, vec![Violation::NotPrimitive]);
    }

    #[test]
    fn star_motif_sizes() {
        let g = build_motif(&Motif::Star {
            d: 2,
            n: 1,
            p: 0.4,
            s: 0.3,
            source_mean: 2.0,
            sink_mean: 0.5,
        })
        .unwrap();
        assert_eq!(g.num_patches(), 3);
        assert!(g.validate().is_valid());
        let g = build_motif(&Motif::Star {
            d: 3,
            n: 4,
            p: 0.4,
            s: 0.3,
            source_mean: 2.0,
            sink_mean: 0.5,
        })
        .unwrap();
        assert_eq!(g.num_patches(), 13);
        assert!(g.validate().is_valid());
    }

    #[test]
    fn periodic_array_is_a_cycle() {
        let g = build_motif(&Motif::PeriodicArray {
            pattern: vec![SOURCE, SINK, SINK],
            means: source_sink_means(2.0, 0.5),
            stay: 0.2,
            left: 0.4,
            right: 0.4,
        })
        .unwrap();
        assert_eq!(g.num_patches(), 3);
        assert!(g.validate().is_valid());
        let d = g.dispersal();
        assert_relative_eq!(d[(0, 1)], 0.4);
        assert_relative_eq!(d[(0, 2)], 0.4);
        assert_relative_eq!(d[(2, 0)], 0.4);
    }

    #[test]
    fn periodic_array_of_period_two_merges_neighbours() {
        let g = build_motif(&Motif::PeriodicArray {
            pattern: vec![SOURCE, SINK],
            means: source_sink_means(2.0, 0.5),
            stay: 0.2,
            left: 0.3,
            right: 0.5,
        })
        .unwrap();
        assert_relative_eq!(g.dispersal()[(0, 1)], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn reference_source_is_first_maximal_patch() {
        let g = PatchGraph::new(
            vec![2, 1, 1],
            vec![vec![1.0 / 3.0; 3]; 3],
            BTreeMap::from([(1, 3.0), (2, 0.5)]),
        )
        .unwrap();
        assert_eq!(g.reference_source(), 1);
    }
}
