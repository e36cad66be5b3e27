//! Model explanation: regional PCA loading mass, latent/component correlations
//! and exact Shapley values over the network's latent features.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataprep::{reshape_for_model, FeatureRow, PcaModel};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::neuralnet::{Network, Tensor};
use crate::rng::{self, tag};
use crate::stats;

/// Largest feature count for exact coalition enumeration.
pub const MAX_EXACT_FEATURES: usize = 16;

/// Named optode groups, 1-based optode numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub regions: Vec<(String, Vec<usize>)>,
}

impl Default for RegionMap {
    fn default() -> Self {
        Self {
            regions: vec![
                ("LPFC".into(), vec![1, 2, 3, 4, 13, 14, 15, 16]),
                ("VMPFC".into(), (5..=12).collect()),
            ],
        }
    }
}

impl RegionMap {
    /// Every optode `1..=n_optodes` must belong to exactly one region.
    pub fn validate(&self, n_optodes: usize) -> Result<()> {
        let mut seen = vec![0usize; n_optodes];
        for (name, optodes) in &self.regions {
            for &o in optodes {
                if o == 0 || o > n_optodes {
                    return Err(Error::Config(format!("region {name}: optode {o} outside 1..={n_optodes}")));
                }
                seen[o - 1] += 1;
            }
        }
        let bad: Vec<String> = seen.iter().enumerate().filter(|(_, c)| **c != 1).map(|(i, _)| (i + 1).to_string()).collect();
        if !bad.is_empty() {
            return Err(Error::Config(format!("optodes not covered exactly once: {}", bad.join(", "))));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTable {
    pub regions: Vec<String>,
    /// `values[j][r]`: summed |loading| of region `r` on component `j`.
    pub values: Vec<Vec<f64>>,
}

pub fn region_contribution(pca: &PcaModel, map: &RegionMap) -> Result<RegionTable> {
    map.validate(pca.n_inputs())?;
    let values = (0..pca.n_components())
        .map(|j| {
            map.regions
                .iter()
                .map(|(_, optodes)| optodes.iter().map(|&o| pca.loadings[o - 1][j].abs()).sum())
                .collect()
        })
        .collect();
    Ok(RegionTable { regions: map.regions.iter().map(|(n, _)| n.clone()).collect(), values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    /// `values[u][j]`: Pearson r between latent `u` and component score `j`.
    pub values: Vec<Vec<f64>>,
    /// Columns with zero variance; their correlations are reported as 0.
    pub constant_latents: Vec<usize>,
    pub constant_components: Vec<usize>,
}

fn columns(rows: &[Vec<f64>], what: &str) -> Result<Vec<Vec<f64>>> {
    let w = rows[0].len();
    if rows.iter().any(|r| r.len() != w) {
        return Err(Error::Shape(format!("{what} rows have unequal widths")));
    }
    Ok((0..w).map(|j| rows.iter().map(|r| r[j]).collect()).collect())
}

fn is_constant(col: &[f64]) -> bool {
    col.iter().all(|v| *v == col[0])
}

pub fn latent_pca_correlation(latents: &[Vec<f64>], scores: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    if latents.len() < 3 {
        return Err(Error::InsufficientData(format!("correlation needs at least 3 rows, got {}", latents.len())));
    }
    if latents.len() != scores.len() {
        return Err(Error::Shape(format!("{} latent rows vs {} score rows", latents.len(), scores.len())));
    }
    let lat = columns(latents, "latent")?;
    let pcs = columns(scores, "score")?;
    let values = lat
        .iter()
        .map(|l| pcs.iter().map(|p| stats::pearson(l, p).unwrap_or(0.0)).collect())
        .collect();
    let constant = |cols: &[Vec<f64>]| cols.iter().enumerate().filter(|(_, c)| is_constant(c)).map(|(i, _)| i).collect();
    Ok(CorrelationMatrix { values, constant_latents: constant(&lat), constant_components: constant(&pcs) })
}

/// `s!(u − s − 1)!/u!` for every coalition size `s < u`.
pub fn shapley_weights(u: usize) -> Vec<f64> {
    let fact: Vec<f64> = (0..=u).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    }).collect();
    (0..u).map(|s| fact[s] * fact[u - s - 1] / fact[u]).collect()
}

/// Shapley values from a table of coalition values indexed by bitmask.
pub fn shapley_from_values(values: &[f64], u: usize) -> Vec<f64> {
    let w = shapley_weights(u);
    (0..u)
        .map(|i| {
            let bit = 1usize << i;
            (0..values.len())
                .filter(|m| m & bit == 0)
                .map(|m| w[m.count_ones() as usize] * (values[m | bit] - values[m]))
                .sum()
        })
        .collect()
}

/// Exact Shapley values of the game `value(mask)` over `u` players.
pub fn shapley_exact<V>(u: usize, value: V, exec: Exec) -> Result<(Vec<f64>, f64)>
where
    V: Fn(usize) -> f64 + Sync + Send,
{
    if u == 0 || u > MAX_EXACT_FEATURES {
        return Err(Error::Config(format!(
            "exact Shapley enumeration supports 1..={MAX_EXACT_FEATURES} features, got {u}; \
             wider inputs need a sampling estimator"
        )));
    }
    let values = exec.map_range(1 << u, value);
    Ok((shapley_from_values(&values, u), values[0]))
}

/// Interventional value `v(S)`: mean model output over background rows with
/// the features in `S` replaced by `x`'s values.
pub fn interventional_value<F>(model: &F, x: &[f64], background: &[Vec<f64>], mask: usize) -> f64
where
    F: Fn(&[Vec<f64>]) -> Vec<f64>,
{
    let hybrids: Vec<Vec<f64>> = background
        .iter()
        .map(|b| b.iter().enumerate().map(|(i, bv)| if mask >> i & 1 == 1 { x[i] } else { *bv }).collect())
        .collect();
    stats::mean(&model(&hybrids))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyValues {
    pub phi: Vec<f64>,
    pub base_value: f64,
    /// Model output at `x`; equals `base_value + Σ phi`.
    pub output: f64,
}

pub fn shapley_interventional<F>(model: &F, x: &[f64], background: &[Vec<f64>], exec: Exec) -> Result<ShapleyValues>
where
    F: Fn(&[Vec<f64>]) -> Vec<f64> + Sync,
{
    if background.is_empty() {
        return Err(Error::InsufficientData("Shapley background is empty".into()));
    }
    if background.iter().any(|b| b.len() != x.len()) {
        return Err(Error::Shape("background rows must match the explained row's width".into()));
    }
    let u = x.len();
    let (phi, base_value) = shapley_exact(u, |m| interventional_value(model, x, background, m), exec)?;
    let output = model(&[x.to_vec()])[0];
    Ok(ShapleyValues { phi, base_value, output })
}

/// At most `cap` rows, chosen by a seeded draw without replacement, kept in
/// their original order.
pub fn sample_background(rows: &[Vec<f64>], cap: usize, seed: u64) -> Vec<Vec<f64>> {
    if rows.len() <= cap {
        return rows.to_vec();
    }
    let mut idx = sample(&mut rng::stream(seed, &[tag::BACKGROUND]), rows.len(), cap).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| rows[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub background_size: usize,
    /// Explain at most this many test rows; 0 explains all of them.
    pub max_samples: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { background_size: 128, max_samples: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAttribution {
    pub participant_id: String,
    pub question_id: usize,
    pub label: u8,
    pub output: f64,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub architecture: String,
    pub regions: RegionTable,
    pub correlation: CorrelationMatrix,
    pub base_value: f64,
    pub background_rows: usize,
    pub shapley: Vec<SampleAttribution>,
    /// Mean |φ| per latent feature over the explained rows.
    pub mean_abs_shapley: Vec<f64>,
}

/// Class-1 probability of the network head as a function of latent rows.
pub fn head_class1(net: &Network) -> impl Fn(&[Vec<f64>]) -> Vec<f64> + Sync + '_ {
    move |rows: &[Vec<f64>]| {
        let t = Tensor::from_rows(rows).expect("rectangular latent rows");
        let p = net.head_proba(&t).expect("latent width matches the head");
        p.data().chunks(2).map(|r| r[1]).collect()
    }
}

/// Full explanation: region table from `pca`, correlations over
/// `correlation_rows`, Shapley values for `explain_rows` against a background
/// drawn from the latents of `background_rows`.
#[allow(clippy::too_many_arguments)]
pub fn explain_model(
    net: &Network,
    pca: &PcaModel,
    correlation_rows: &[FeatureRow],
    background_rows: &[FeatureRow],
    explain_rows: &[FeatureRow],
    config: &ExplainConfig,
    seed: u64,
    exec: Exec,
) -> Result<AttributionReport> {
    let latent_dim = net.config.latent_dim();
    if latent_dim > MAX_EXACT_FEATURES {
        return Err(Error::Config(format!(
            "{} latents are {latent_dim}-wide; exact Shapley supports at most {MAX_EXACT_FEATURES}",
            net.config.architecture.name()
        )));
    }
    if config.background_size == 0 {
        return Err(Error::Config("background_size must be positive".into()));
    }
    let regions = region_contribution(pca, &RegionMap::default())?;
    let corr_latents = net.extract_latent(&reshape_for_model(correlation_rows)?)?.rows();
    let scores: Vec<Vec<f64>> = correlation_rows.iter().map(|r| r.features.clone()).collect();
    let correlation = latent_pca_correlation(&corr_latents, &scores)?;

    let bg_all = net.extract_latent(&reshape_for_model(background_rows)?)?.rows();
    let background = sample_background(&bg_all, config.background_size, seed);
    let take = if config.max_samples == 0 { explain_rows.len() } else { config.max_samples.min(explain_rows.len()) };
    let rows = &explain_rows[..take];
    let latents = net.extract_latent(&reshape_for_model(rows)?)?.rows();
    let model = head_class1(net);
    let mut shapley = Vec::with_capacity(take);
    let mut base_value = f64::NAN;
    for (row, z) in rows.iter().zip(&latents) {
        let sv = shapley_interventional(&model, z, &background, exec)?;
        base_value = sv.base_value;
        shapley.push(SampleAttribution {
            participant_id: row.participant_id.clone(),
            question_id: row.question_id,
            label: row.label,
            output: sv.output,
            phi: sv.phi,
        });
    }
    if shapley.is_empty() {
        // v(∅) does not depend on the explained row.
        base_value = stats::mean(&model(&background));
    }
    let mean_abs_shapley = (0..latent_dim)
        .map(|i| if shapley.is_empty() { 0.0 } else { stats::mean(&shapley.iter().map(|s| s.phi[i].abs()).collect::<Vec<_>>()) })
        .collect();
    Ok(AttributionReport {
        architecture: net.config.architecture.name().to_string(),
        regions,
        correlation,
        base_value,
        background_rows: background.len(),
        shapley,
        mean_abs_shapley,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn pca_with(loadings: Vec<Vec<f64>>) -> PcaModel {
        let d = loadings.len();
        let k = loadings[0].len();
        PcaModel { mean: vec![0.0; d], scale: vec![1.0; d], loadings, explained_variance: vec![1.0; k] }
    }

    #[test]
    fn region_sums() {
        let m = 0.3;
        let t = region_contribution(&pca_with(vec![vec![m, -m]; 16]), &RegionMap::default()).unwrap();
        assert_eq!(t.regions, vec!["LPFC", "VMPFC"]);
        for row in &t.values {
            for v in row {
                assert!((v - 8.0 * m).abs() < 1e-12);
            }
        }
        let mut one_hot = vec![vec![0.0; 3]; 16];
        one_hot[4][1] = 1.0;
        let t = region_contribution(&pca_with(one_hot), &RegionMap::default()).unwrap();
        assert_eq!(t.values[1], vec![0.0, 1.0]);
    }

    #[test]
    fn region_map_must_cover() {
        let map = RegionMap { regions: vec![("A".into(), (1..=15).collect())] };
        assert!(matches!(map.validate(16), Err(Error::Config(_))));
        let overlap = RegionMap { regions: vec![("A".into(), (1..=16).collect()), ("B".into(), vec![3])] };
        assert!(overlap.validate(16).is_err());
        assert!(RegionMap::default().validate(16).is_ok());
    }

    /// Two-pass covariance over standard deviations.
    fn naive_r(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
        let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n).sqrt();
        cov / (sa * sb)
    }

    #[test]
    fn correlation_matches_naive_oracle() {
        let mut s = rng::stream(41, &[]);
        let lat: Vec<Vec<f64>> = (0..50).map(|_| (0..8).map(|_| s.random_range(-1.0..1.0)).collect()).collect();
        let pcs: Vec<Vec<f64>> = (0..50).map(|_| (0..12).map(|_| s.random_range(-3.0..3.0)).collect()).collect();
        let c = latent_pca_correlation(&lat, &pcs).unwrap();
        assert_eq!(c.values.len(), 8);
        for u in 0..8 {
            for j in 0..12 {
                let a: Vec<f64> = lat.iter().map(|r| r[u]).collect();
                let b: Vec<f64> = pcs.iter().map(|r| r[j]).collect();
                assert!((c.values[u][j] - naive_r(&a, &b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlation_edge_cases() {
        let pcs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.7 - 1.0, (i * i) as f64]).collect();
        let lat: Vec<Vec<f64>> = pcs.iter().map(|r| vec![r[1], -r[0], 2.0]).collect();
        let c = latent_pca_correlation(&lat, &pcs).unwrap();
        assert_eq!(c.values[0][1], 1.0);
        assert_eq!(c.values[1][0], -1.0);
        assert_eq!(c.values[2], vec![0.0, 0.0]);
        assert_eq!(c.constant_latents, vec![2]);
        assert!(latent_pca_correlation(&lat[..2], &pcs[..2]).is_err());
    }

    #[test]
    fn linear_model_closed_form() {
        let w = [0.5, -1.25, 2.0, 0.0, 3.0];
        let model = |rows: &[Vec<f64>]| rows.iter().map(|r| r.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
        let mut s = rng::stream(42, &[]);
        let bg: Vec<Vec<f64>> = (0..20).map(|_| (0..5).map(|_| s.random_range(-1.0..1.0)).collect()).collect();
        let x = vec![0.3, 1.1, -0.7, 5.0, 0.2];
        let sv = shapley_interventional(&model, &x, &bg, Exec::Sequential).unwrap();
        for i in 0..5 {
            let mean_i = bg.iter().map(|r| r[i]).sum::<f64>() / 20.0;
            assert!((sv.phi[i] - w[i] * (x[i] - mean_i)).abs() < 1e-12);
        }
        assert!((sv.phi.iter().sum::<f64>() - (sv.output - sv.base_value)).abs() < 1e-10);
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn matches_permutation_oracle() {
        // Nonlinear game on 4 players.
        let v = |m: usize| {
            let b = |i: usize| f64::from((m >> i & 1) as u8);
            (b(0) + 2.0 * b(1)).powi(2) - 3.0 * b(2) * b(3) + 0.5 * b(0) * b(2) * b(3) + 0.1 * b(3)
        };
        let (phi, base) = shapley_exact(4, v, Exec::Parallel).unwrap();
        assert_eq!(base, v(0));
        let perms = permutations(4);
        assert_eq!(perms.len(), 24);
        let mut oracle = [0.0; 4];
        for p in &perms {
            let mut mask = 0;
            for &i in p {
                oracle[i] += v(mask | 1 << i) - v(mask);
                mask |= 1 << i;
            }
        }
        for i in 0..4 {
            assert!((phi[i] - oracle[i] / 24.0).abs() < 1e-12);
        }
    }

    #[test]
    fn width_limits() {
        assert!(shapley_exact(17, |_| 0.0, Exec::Sequential).is_err());
        assert!(shapley_exact(0, |_| 0.0, Exec::Sequential).is_err());
        let w = shapley_weights(3);
        // 1/3, 1/6, 1/3
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn background_cap() {
        let rows: Vec<Vec<f64>> = (0..300).map(|i| vec![i as f64]).collect();
        let a = sample_background(&rows, 128, 9);
        assert_eq!(a.len(), 128);
        assert_eq!(a, sample_background(&rows, 128, 9));
        assert!(a.windows(2).all(|w| w[0][0] < w[1][0]));
        assert_eq!(sample_background(&rows[..10], 128, 9).len(), 10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn symmetry_dummy_efficiency(coef in proptest::collection::vec(-2.0f64..2.0, 8), u in 3usize..7) {
            // Players 0 and 1 are exchangeable, player u−1 is ignored.
            let v = |m: usize| {
                let b = |i: usize| f64::from((m >> i & 1) as u8);
                let pair = b(0) + b(1);
                let mut acc = coef[0] * pair + coef[1] * pair * pair + coef[2] * b(0) * b(1);
                for i in 2..u - 1 {
                    acc += coef[3 + (i % 5)] * b(i) * (1.0 + pair);
                }
                acc
            };
            let (phi, base) = shapley_exact(u, v, Exec::Sequential).unwrap();
            prop_assert!((phi[0] - phi[1]).abs() < 1e-10);
            prop_assert!(phi[u - 1].abs() < 1e-10);
            prop_assert!((phi.iter().sum::<f64>() - (v((1 << u) - 1) - base)).abs() < 1e-10);
        }
    }
}
