use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::metrics::MetricReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectResult {
    pub seed: u64,
    pub image_id: String,
    pub object_id: String,
    pub category: String,
    pub metrics: MetricReport,
}

/// Means over a group of results. IoU and GIoU are in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub count: usize,
    pub iou3d_pct: f64,
    pub giou3d_pct: f64,
    pub nhd: f64,
    pub chamfer: f64,
}

impl Means {
    fn of<'a>(results: impl Iterator<Item = &'a ObjectResult>) -> Self {
        let (mut n, mut iou, mut giou, mut nhd, mut ch) = (0usize, 0.0, 0.0, 0.0, 0.0);
        for r in results {
            n += 1;
            iou += r.metrics.iou3d;
            giou += r.metrics.giou3d;
            nhd += r.metrics.nhd;
            ch += r.metrics.chamfer;
        }
        let d = n.max(1) as f64;
        Self {
            count: n,
            iou3d_pct: 100.0 * iou / d,
            giou3d_pct: 100.0 * giou / d,
            nhd: nhd / d,
            chamfer: ch / d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: String,
    #[serde(flatten)]
    pub means: Means,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    #[serde(flatten)]
    pub means: Means,
}

/// Spread of a per-seed quantity. `std` is the population standard
/// deviation (divides by the number of seeds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedStats {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub std: f64,
}

impl SeedStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        // Identical values give exactly zero spread, free of summation error.
        if max == min {
            return Self {
                mean: max,
                max,
                min,
                std: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            max,
            min,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    #[serde(flatten)]
    pub means: Means,
    pub per_seed: Vec<SeedSummary>,
    pub iou3d_pct_over_seeds: SeedStats,
    pub nhd_over_seeds: SeedStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    pub per_object: Vec<ObjectResult>,
    /// Sorted by category name.
    pub per_category: Vec<CategorySummary>,
    pub overall: Overall,
}

impl EvalReport {
    pub fn from_results(seeds: &[u64], per_object: Vec<ObjectResult>) -> Self {
        let mut groups: BTreeMap<&str, Vec<&ObjectResult>> = BTreeMap::new();
        for r in &per_object {
            groups.entry(r.category.as_str()).or_default().push(r);
        }
        let per_category = groups
            .into_iter()
            .map(|(c, rs)| CategorySummary {
                category: c.to_string(),
                means: Means::of(rs.into_iter()),
            })
            .collect();
        let per_seed: Vec<SeedSummary> = seeds
            .iter()
            .map(|&s| SeedSummary {
                seed: s,
                means: Means::of(per_object.iter().filter(|r| r.seed == s)),
            })
            .collect();
        let ious: Vec<f64> = per_seed.iter().map(|s| s.means.iou3d_pct).collect();
        let nhds: Vec<f64> = per_seed.iter().map(|s| s.means.nhd).collect();
        let overall = Overall {
            means: Means::of(per_object.iter()),
            iou3d_pct_over_seeds: SeedStats::of(&ious),
            nhd_over_seeds: SeedStats::of(&nhds),
            per_seed,
        };
        Self {
            seeds: seeds.to_vec(),
            per_object,
            per_category,
            overall,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise") + "\n"
    }

    /// One row per evaluated object. IoU in percent with two decimals, the
    /// other metrics with four.
    pub fn objects_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "seed",
            "image_id",
            "object_id",
            "category",
            "iou3d_pct",
            "giou3d",
            "nhd",
            "chamfer",
        ])?;
        for r in &self.per_object {
            let m = &r.metrics;
            w.write_record([
                r.seed.to_string(),
                r.image_id.clone(),
                r.object_id.clone(),
                r.category.clone(),
                format!("{:.2}", 100.0 * m.iou3d),
                format!("{:.4}", m.giou3d),
                format!("{:.4}", m.nhd),
                format!("{:.4}", m.chamfer),
            ])?;
        }
        finish(w)
    }

    /// Per-category, per-seed and overall rows, then the seed statistics.
    pub fn summary_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "scope",
            "name",
            "count",
            "iou3d_pct",
            "giou3d_pct",
            "nhd",
            "chamfer",
        ])?;
        let row = |w: &mut csv::Writer<Vec<u8>>, scope: &str, name: &str, m: &Means| {
            w.write_record([
                scope.to_string(),
                name.to_string(),
                m.count.to_string(),
                format!("{:.2}", m.iou3d_pct),
                format!("{:.2}", m.giou3d_pct),
                format!("{:.4}", m.nhd),
                format!("{:.4}", m.chamfer),
            ])
        };
        for c in &self.per_category {
            row(&mut w, "category", &c.category, &c.means)?;
        }
        for s in &self.overall.per_seed {
            row(&mut w, "seed", &s.seed.to_string(), &s.means)?;
        }
        row(&mut w, "overall", "all", &self.overall.means)?;
        w.write_record(["statistic", "over_seeds", "", "iou3d_pct", "", "nhd", ""])?;
        let (a, b) = (
            &self.overall.iou3d_pct_over_seeds,
            &self.overall.nhd_over_seeds,
        );
        for (name, x, y) in [
            ("mean", a.mean, b.mean),
            ("max", a.max, b.max),
            ("min", a.min, b.min),
            ("std", a.std, b.std),
        ] {
            w.write_record([
                "statistic",
                name,
                "",
                &format!("{x:.2}"),
                "",
                &format!("{y:.4}"),
                "",
            ])?;
        }
        finish(w)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, EvalError> {
    let bytes = w
        .into_inner()
        .map_err(|e| EvalError::Output(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}
