//! Retrieval quality metrics over Hamming rankings and code diagnostics.
//!
//! Relevance between query `q` and gallery item `g` is supplied as a
//! predicate `Fn(q, g) -> bool`; [`label_relevance`] builds the usual
//! shared-label rule.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::LabelSet;
use crate::error::{Error, Result};
use crate::hashnet::BinaryCode;
use crate::retrieval::{rank_queries, PackedCodes, RankingResult};

pub const DEFAULT_CUTOFF: usize = 5000;
pub const HAMMING_RADIUS: usize = 2;

/// Shared-label relevance between query and gallery label lists.
pub fn label_relevance<'a>(query: &'a [LabelSet], gallery: &'a [LabelSet]) -> impl Fn(usize, usize) -> bool + Sync + 'a {
    move |q, g| query[q].intersects(&gallery[g])
}

/// Truncated average precision: `Σ_{i≤cutoff} P(i)·rel(i) / min(R, cutoff)`
/// where `R` counts relevant gallery items. Zero when nothing is relevant.
pub fn average_precision(ranking: &RankingResult, relevance: &[bool], cutoff: usize) -> f64 {
    let total = relevance.iter().filter(|r| **r).count();
    if total == 0 || cutoff == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &id) in ranking.ids.iter().take(cutoff).enumerate() {
        if relevance[id] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / total.min(cutoff) as f64
}

fn check_pair(queries: &PackedCodes, gallery: &PackedCodes) -> Result<()> {
    if queries.is_empty() {
        return Err(Error::invalid("query set is empty"));
    }
    if gallery.is_empty() {
        return Err(Error::invalid("gallery is empty"));
    }
    if queries.code_length() != gallery.code_length() {
        return Err(Error::invalid(format!(
            "query codes have {} bits, gallery codes have {}",
            queries.code_length(),
            gallery.code_length()
        )));
    }
    Ok(())
}

fn relevance_row<F: Fn(usize, usize) -> bool>(q: usize, n: usize, relevance: &F) -> Vec<bool> {
    (0..n).map(|g| relevance(q, g)).collect()
}

fn map_from_rankings<F>(rankings: &[RankingResult], n: usize, relevance: &F, cutoff: usize) -> f64
where
    F: Fn(usize, usize) -> bool + Sync,
{
    let aps: Vec<f64> = rankings
        .par_iter()
        .map(|r| average_precision(r, &relevance_row(r.query_id, n, relevance), cutoff))
        .collect();
    aps.iter().sum::<f64>() / aps.len() as f64
}

/// Mean of [`average_precision`] over all queries.
pub fn mean_average_precision<F>(queries: &PackedCodes, gallery: &PackedCodes, relevance: &F, cutoff: usize) -> Result<f64>
where
    F: Fn(usize, usize) -> bool + Sync,
{
    check_pair(queries, gallery)?;
    if cutoff == 0 {
        return Err(Error::invalid("cutoff must be at least 1"));
    }
    let rankings = rank_queries(queries, gallery)?;
    Ok(map_from_rankings(&rankings, gallery.len(), relevance, cutoff))
}

fn radius_precision_from_rankings<F>(rankings: &[RankingResult], relevance: &F, radius: u32) -> f64
where
    F: Fn(usize, usize) -> bool + Sync,
{
    let per: Vec<f64> = rankings
        .iter()
        .map(|r| {
            let within = r.distances.iter().take_while(|d| **d <= radius).count();
            if within == 0 {
                return 0.0;
            }
            let rel = r.ids[..within].iter().filter(|&&g| relevance(r.query_id, g)).count();
            rel as f64 / within as f64
        })
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

/// Mean precision of the items within Hamming radius `radius`; a query that
/// retrieves nothing counts as precision 0.
pub fn precision_within_radius<F>(queries: &PackedCodes, gallery: &PackedCodes, relevance: &F, radius: usize) -> Result<f64>
where
    F: Fn(usize, usize) -> bool + Sync,
{
    check_pair(queries, gallery)?;
    let rankings = rank_queries(queries, gallery)?;
    Ok(radius_precision_from_rankings(&rankings, relevance, radius as u32))
}

/// [`precision_within_radius`] at radius 2.
pub fn precision_at_hamming2<F>(queries: &PackedCodes, gallery: &PackedCodes, relevance: &F) -> Result<f64>
where
    F: Fn(usize, usize) -> bool + Sync,
{
    precision_within_radius(queries, gallery, relevance, HAMMING_RADIUS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub depth: usize,
    pub recall: f64,
    pub precision: f64,
}

fn pr_from_rankings<F>(rankings: &[RankingResult], relevance: &F) -> Vec<PrPoint>
where
    F: Fn(usize, usize) -> bool + Sync,
{
    let n = rankings[0].ids.len();
    let per_query: Vec<(Vec<u32>, usize)> = rankings
        .par_iter()
        .map(|r| {
            let mut hits = 0u32;
            let cum: Vec<u32> = r
                .ids
                .iter()
                .map(|&g| {
                    hits += relevance(r.query_id, g) as u32;
                    hits
                })
                .collect();
            (cum, hits as usize)
        })
        .collect();
    let nq = rankings.len() as f64;
    (1..=n)
        .map(|depth| {
            let (mut p, mut rc) = (0.0, 0.0);
            for (cum, total) in &per_query {
                let h = cum[depth - 1] as f64;
                p += h / depth as f64;
                if *total > 0 {
                    rc += h / *total as f64;
                }
            }
            PrPoint {
                depth,
                recall: rc / nq,
                precision: p / nq,
            }
        })
        .collect()
}

/// Rank-sweep precision/recall curve, one point per depth `1..=N`, averaged
/// over queries. Queries without relevant items contribute recall 0.
pub fn pr_curve<F>(queries: &PackedCodes, gallery: &PackedCodes, relevance: &F) -> Result<Vec<PrPoint>>
where
    F: Fn(usize, usize) -> bool + Sync,
{
    check_pair(queries, gallery)?;
    let rankings = rank_queries(queries, gallery)?;
    Ok(pr_from_rankings(&rankings, relevance))
}

fn top_n_from_rankings<F>(rankings: &[RankingResult], relevance: &F, ns: &[usize]) -> Vec<(usize, f64)>
where
    F: Fn(usize, usize) -> bool + Sync,
{
    ns.iter()
        .map(|&n| {
            let total: f64 = rankings
                .iter()
                .map(|r| r.ids[..n].iter().filter(|&&g| relevance(r.query_id, g)).count() as f64 / n as f64)
                .sum();
            (n, total / rankings.len() as f64)
        })
        .collect()
}

/// Mean fraction of relevant items among the top `n`, for each `n`.
pub fn precision_at_top_n<F>(queries: &PackedCodes, gallery: &PackedCodes, relevance: &F, ns: &[usize]) -> Result<Vec<(usize, f64)>>
where
    F: Fn(usize, usize) -> bool + Sync,
{
    check_pair(queries, gallery)?;
    check_ns(ns, gallery.len())?;
    let rankings = rank_queries(queries, gallery)?;
    Ok(top_n_from_rankings(&rankings, relevance, ns))
}

fn check_ns(ns: &[usize], gallery: usize) -> Result<()> {
    if let Some(n) = ns.iter().find(|&&n| n == 0 || n > gallery) {
        return Err(Error::invalid(format!(
            "top-n value {n} must lie in 1..={gallery} (gallery size)"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitCorrelation {
    pub matrix: Vec<Vec<f64>>,
    pub mean_abs_off_diagonal: f64,
}

/// Pearson correlation between bit positions. Columns with zero variance
/// get 1 on the diagonal and 0 elsewhere.
pub fn bit_correlation(codes: &[BinaryCode]) -> Result<BitCorrelation> {
    if codes.len() < 2 {
        return Err(Error::invalid("bit correlation needs at least 2 codes"));
    }
    let k = codes[0].len();
    if codes.iter().any(|c| c.len() != k) {
        return Err(Error::invalid("codes must share one length"));
    }
    let n = codes.len() as f64;
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|j| codes.iter().map(|c| c.as_slice()[j] as f64).collect())
        .collect();
    let centered: Vec<(Vec<f64>, f64)> = cols
        .iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / n;
            let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
            let ss = c.iter().map(|v| v * v).sum::<f64>();
            (c, ss.sqrt())
        })
        .collect();
    let mut matrix = vec![vec![0.0; k]; k];
    let mut off = 0.0;
    for a in 0..k {
        matrix[a][a] = 1.0;
        for b in (a + 1)..k {
            let (ca, na) = &centered[a];
            let (cb, nb) = &centered[b];
            let r = if *na > 0.0 && *nb > 0.0 {
                ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
            } else {
                0.0
            };
            matrix[a][b] = r;
            matrix[b][a] = r;
            off += 2.0 * r.abs();
        }
    }
    let pairs = (k * k).saturating_sub(k);
    Ok(BitCorrelation {
        matrix,
        mean_abs_off_diagonal: if pairs > 0 { off / pairs as f64 } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default = "default_top_n")]
    pub top_n: Vec<usize>,
}

fn default_cutoff() -> usize {
    DEFAULT_CUTOFF
}

fn default_top_n() -> Vec<usize> {
    vec![1, 5, 10, 20, 50, 100, 200, 500, 1000]
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            cutoff: DEFAULT_CUTOFF,
            top_n: default_top_n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub code_length: usize,
    pub queries: usize,
    pub gallery: usize,
    pub settings: EvalSettings,
    pub map: f64,
    pub p_at_h2: f64,
    pub pr_curve: Vec<PrPoint>,
    pub p_at_n: Vec<(usize, f64)>,
    pub bit_correlation: BitCorrelation,
    /// Mean encode time per image in microseconds, when known.
    pub encode_us_per_image: Option<f64>,
}

pub const REPORT_FILE: &str = "report.json";
pub const PR_CSV: &str = "pr_curve.csv";
pub const P_AT_N_CSV: &str = "p_at_n.csv";

/// Computes every metric from one set of rankings. Top-n values beyond the
/// gallery size are dropped.
pub fn evaluate<F>(queries: &PackedCodes, gallery: &PackedCodes, relevance: &F, settings: &EvalSettings) -> Result<EvalReport>
where
    F: Fn(usize, usize) -> bool + Sync,
{
    check_pair(queries, gallery)?;
    if settings.cutoff == 0 {
        return Err(Error::invalid("cutoff must be at least 1"));
    }
    let rankings = rank_queries(queries, gallery)?;
    let ns: Vec<usize> = settings
        .top_n
        .iter()
        .copied()
        .filter(|&n| n >= 1 && n <= gallery.len())
        .collect();
    let gallery_codes: Vec<BinaryCode> = (0..gallery.len()).map(|i| gallery.code(i)).collect();
    Ok(EvalReport {
        code_length: gallery.code_length(),
        queries: queries.len(),
        gallery: gallery.len(),
        settings: settings.clone(),
        map: map_from_rankings(&rankings, gallery.len(), relevance, settings.cutoff),
        p_at_h2: radius_precision_from_rankings(&rankings, relevance, HAMMING_RADIUS as u32),
        pr_curve: pr_from_rankings(&rankings, relevance),
        p_at_n: top_n_from_rankings(&rankings, relevance, &ns),
        bit_correlation: bit_correlation(&gallery_codes)?,
        encode_us_per_image: None,
    })
}

impl EvalReport {
    /// Writes `report.json`, `pr_curve.csv` and `p_at_n.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        let p = dir.join(REPORT_FILE);
        fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
        let mut pr = String::from("depth,recall,precision\n");
        for pt in &self.pr_curve {
            pr.push_str(&format!("{},{},{}\n", pt.depth, pt.recall, pt.precision));
        }
        let p = dir.join(PR_CSV);
        fs::write(&p, pr).map_err(|e| Error::io(&p, e))?;
        let mut pn = String::from("n,precision\n");
        for (n, v) in &self.p_at_n {
            pn.push_str(&format!("{n},{v}\n"));
        }
        let p = dir.join(P_AT_N_CSV);
        fs::write(&p, pn).map_err(|e| Error::io(&p, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::pack;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn code(bits: &[i8]) -> BinaryCode {
        BinaryCode::new(bits.to_vec()).unwrap()
    }

    fn ranking(ids: Vec<usize>) -> RankingResult {
        let distances = vec![0; ids.len()];
        RankingResult {
            query_id: 0,
            ids,
            distances,
        }
    }

    #[test]
    fn ap_examples() {
        let r = ranking(vec![0, 1, 2, 3]);
        assert!((average_precision(&r, &[true, true, true, true], 3) - 1.0).abs() < 1e-15);
        let ap = average_precision(&ranking(vec![0, 1, 2]), &[true, false, true], 3);
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&r, &[false; 4], 3), 0.0);
    }

    #[test]
    fn perfect_separation_gives_unit_scores() {
        let c0 = code(&[1, 1, 1, 1, 1, 1]);
        let c1 = code(&[-1, -1, -1, 1, 1, 1]);
        let c2 = code(&[1, 1, 1, -1, -1, -1]);
        let codes = vec![c0.clone(), c1.clone(), c2.clone(), c0, c1, c2];
        let labels: Vec<LabelSet> = (0..6).map(|i| LabelSet::single(i % 3)).collect();
        let p = pack(&codes).unwrap();
        let rel = label_relevance(&labels, &labels);
        assert!((mean_average_precision(&p, &p, &rel, 5000).unwrap() - 1.0).abs() < 1e-15);
        assert!((precision_at_hamming2(&p, &p, &rel).unwrap() - 1.0).abs() < 1e-15);
        let pr = pr_curve(&p, &p, &rel).unwrap();
        assert_eq!(pr[0].precision, 1.0);
        assert_eq!(pr[1].precision, 1.0);
        assert!((pr[1].recall - 1.0).abs() < 1e-15);
        assert_eq!(pr.last().unwrap().recall, 1.0);
        let top = precision_at_top_n(&p, &p, &rel, &[1, 6]).unwrap();
        assert_eq!(top[0], (1, 1.0));
        assert!((top[1].1 - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn empty_radius_counts_as_zero() {
        let q = pack(&[code(&[1, 1, 1, 1, 1])]).unwrap();
        let g = pack(&[code(&[-1, -1, -1, -1, 1])]).unwrap();
        let rel = |_: usize, _: usize| true;
        assert_eq!(precision_at_hamming2(&q, &g, &rel).unwrap(), 0.0);
    }

    #[test]
    fn argument_errors() {
        let p = pack(&[code(&[1, 1])]).unwrap();
        let empty = pack(&[]).unwrap();
        let rel = |_: usize, _: usize| true;
        assert!(mean_average_precision(&empty, &p, &rel, 10).is_err());
        assert!(precision_at_top_n(&p, &p, &rel, &[2]).is_err());
        let other = pack(&[code(&[1, 1, 1])]).unwrap();
        assert!(pr_curve(&p, &other, &rel).is_err());
    }

    #[test]
    fn single_query_map_is_its_ap() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mk = |rng: &mut ChaCha8Rng| code(&(0..8).map(|_| if rng.random() { 1 } else { -1 }).collect::<Vec<i8>>());
        let q = pack(&[mk(&mut rng)]).unwrap();
        let g = pack(&(0..20).map(|_| mk(&mut rng)).collect::<Vec<_>>()).unwrap();
        let rel_vec: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        let rel = |_: usize, gi: usize| rel_vec[gi];
        let r = crate::retrieval::rank_gallery(&q.code(0), &g).unwrap();
        let ap = average_precision(&r, &rel_vec, 7);
        assert_eq!(mean_average_precision(&q, &g, &rel, 7).unwrap(), ap);
    }

    #[test]
    fn bit_correlation_cases() {
        let same = vec![code(&[1, -1, 1]); 4];
        let bc = bit_correlation(&same).unwrap();
        assert_eq!(bc.matrix, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(bc.mean_abs_off_diagonal, 0.0);

        let dup = vec![code(&[1, 1, -1]), code(&[-1, -1, -1]), code(&[1, 1, 1]), code(&[-1, -1, 1])];
        let bc = bit_correlation(&dup).unwrap();
        assert!((bc.matrix[0][1] - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let random: Vec<BinaryCode> = (0..1000)
            .map(|_| code(&(0..16).map(|_| if rng.random() { 1 } else { -1 }).collect::<Vec<i8>>()))
            .collect();
        assert!(bit_correlation(&random).unwrap().mean_abs_off_diagonal < 0.1);
        assert!(bit_correlation(&random[..1]).is_err());
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let codes = vec![code(&[1, 1]), code(&[-1, 1]), code(&[1, -1])];
        let labels: Vec<LabelSet> = (0..3).map(|i| LabelSet::single(i % 2)).collect();
        let p = pack(&codes).unwrap();
        let report = evaluate(&p, &p, &label_relevance(&labels, &labels), &EvalSettings::default()).unwrap();
        assert_eq!(report.p_at_n.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1]);
        report.write(dir.path()).unwrap();
        assert_eq!(EvalReport::read(&dir.path().join(REPORT_FILE)).unwrap(), report);
        let csv = fs::read_to_string(dir.path().join(PR_CSV)).unwrap();
        assert_eq!(csv.lines().count(), 4);
    }
}
