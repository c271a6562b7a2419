//! Configuration feature construction: constant and correlation pruning,
//! one-hot encoding with train-split vocabularies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cmstore::{ParamKind, ParamTree, ParamValue, SelectedParams};
use crate::error::{CoreError, Result};

/// A named numeric column, row-expanded.
#[derive(Clone, Debug)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

/// Drop columns with fewer than two distinct values. Returns retained
/// indices plus the dropped names.
pub fn prune_constant_features(cols: &[Column]) -> (Vec<usize>, Vec<String>) {
    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    for (i, col) in cols.iter().enumerate() {
        let first = col.values.first().copied();
        let constant = col.values.iter().all(|v| Some(*v) == first);
        if constant {
            dropped.push(col.name.clone());
        } else {
            retained.push(i);
        }
    }
    (retained, dropped)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    cov / (va * vb).sqrt()
}

/// Group columns whose pairwise |Pearson| reaches `rho_star` into connected
/// components and keep the lexicographically-first name per component.
/// Returns retained indices (subset of `candidates`) and `(dropped, kept)`
/// pairs. Zero-variance columns must have been pruned before this stage.
pub fn prune_correlated_features(
    cols: &[Column],
    candidates: &[usize],
    rho_star: f64,
) -> Result<(Vec<usize>, Vec<(String, String)>)> {
    for &i in candidates {
        let col = &cols[i];
        let first = col.values.first().copied();
        if col.values.iter().all(|v| Some(*v) == first) {
            return Err(CoreError::Internal(format!(
                "zero-variance column `{}` reached correlation pruning",
                col.name
            )));
        }
    }
    let m = candidates.len();
    // Union-find over candidate positions.
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for a in 0..m {
        for b in (a + 1)..m {
            let r = pearson(&cols[candidates[a]].values, &cols[candidates[b]].values);
            if r.abs() >= rho_star {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for a in 0..m {
        let root = find(&mut parent, a);
        groups.entry(root).or_default().push(a);
    }
    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    for members in groups.values() {
        let keep = *members
            .iter()
            .min_by(|&&a, &&b| cols[candidates[a]].name.cmp(&cols[candidates[b]].name))
            .unwrap();
        retained.push(candidates[keep]);
        for &other in members {
            if other != keep {
                dropped.push((
                    cols[candidates[other]].name.clone(),
                    cols[candidates[keep]].name.clone(),
                ));
            }
        }
    }
    retained.sort_unstable();
    dropped.sort();
    Ok((retained, dropped))
}

/// How one feature column is derived from a source parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum FeatureEncoding {
    Numeric,
    OneHot { category: String },
    Flag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDesc {
    pub name: String,
    pub source: String,
    #[serde(flatten)]
    pub encoding: FeatureEncoding,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PruneReport {
    pub constant_dropped: Vec<String>,
    /// `(dropped, kept representative)` per correlated group member removed.
    pub correlated_dropped: Vec<(String, String)>,
    /// Count of state encodings that hit a category absent from the
    /// training vocabulary, per source parameter.
    pub unseen_categories: BTreeMap<String, usize>,
}

/// Fitted configuration encoder: train-split vocabularies plus the retained
/// feature list.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfigEncoder {
    pub features: Vec<FeatureDesc>,
    pub vocabs: BTreeMap<String, Vec<String>>,
    pub prune: PruneReport,
}

fn categorical_value(values: &ParamTree, path: &str) -> Option<String> {
    values.get(path).map(ParamValue::canon)
}

fn numeric_value(values: &ParamTree, path: &str) -> Option<f64> {
    match values.get(path)? {
        ParamValue::Int(i) => Some(*i as f64),
        ParamValue::Num(x) => Some(*x),
        ParamValue::Bool(b) => Some(f64::from(*b)),
        ParamValue::Str(s) => s.parse().ok(),
    }
}

fn flag_value(values: &ParamTree, path: &str) -> Option<f64> {
    match values.get(path)? {
        ParamValue::Bool(b) => Some(f64::from(*b)),
        ParamValue::Int(i) => Some(if *i != 0 { 1.0 } else { 0.0 }),
        ParamValue::Num(x) => Some(if *x != 0.0 { 1.0 } else { 0.0 }),
        ParamValue::Str(s) => Some(if s == "true" || s == "on" { 1.0 } else { 0.0 }),
    }
}

impl ConfigEncoder {
    /// Fit vocabularies and pruning on training states only. `train_states`
    /// pairs each state's selected values with its training row count, so
    /// pruning statistics are row-weighted exactly as if computed over the
    /// expanded training matrix.
    pub fn fit(
        selected: &SelectedParams,
        train_states: &[(&ParamTree, usize)],
        rho_star: f64,
    ) -> Result<(Self, bool)> {
        if !(0.0 < rho_star && rho_star <= 1.0) {
            return Err(CoreError::Usage(format!(
                "correlation threshold must lie in (0, 1], got {rho_star}"
            )));
        }
        // Vocabularies from the training split.
        let mut vocabs: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for param in &selected.params {
            if param.kind == ParamKind::Categorical {
                let mut seen: Vec<String> = Vec::new();
                for (values, _) in train_states {
                    if let Some(v) = categorical_value(values, &param.path) {
                        if !seen.contains(&v) {
                            seen.push(v);
                        }
                    }
                }
                seen.sort();
                vocabs.insert(param.path.clone(), seen);
            }
        }

        // Candidate features in manifest order.
        let mut features = Vec::new();
        for param in &selected.params {
            match param.kind {
                ParamKind::Numeric => features.push(FeatureDesc {
                    name: param.path.clone(),
                    source: param.path.clone(),
                    encoding: FeatureEncoding::Numeric,
                }),
                ParamKind::Flag => features.push(FeatureDesc {
                    name: param.path.clone(),
                    source: param.path.clone(),
                    encoding: FeatureEncoding::Flag,
                }),
                ParamKind::Categorical => {
                    for category in &vocabs[&param.path] {
                        features.push(FeatureDesc {
                            name: format!("{}={}", param.path, category),
                            source: param.path.clone(),
                            encoding: FeatureEncoding::OneHot {
                                category: category.clone(),
                            },
                        });
                    }
                }
            }
        }

        // Row-expanded training columns.
        let total_rows: usize = train_states.iter().map(|(_, n)| *n).sum();
        let mut cols: Vec<Column> = features
            .iter()
            .map(|f| Column {
                name: f.name.clone(),
                values: Vec::with_capacity(total_rows),
            })
            .collect();
        for (values, n_rows) in train_states {
            let encoded = encode_with(&features, values, None);
            for (col, v) in cols.iter_mut().zip(encoded) {
                col.values.extend(std::iter::repeat(v).take(*n_rows));
            }
        }

        let (after_constant, constant_dropped) = prune_constant_features(&cols);
        let all_constant = after_constant.is_empty();
        let (retained, correlated_dropped) = if all_constant {
            (Vec::new(), Vec::new())
        } else {
            prune_correlated_features(&cols, &after_constant, rho_star)?
        };

        let features: Vec<FeatureDesc> = retained.iter().map(|&i| features[i].clone()).collect();
        Ok((
            ConfigEncoder {
                features,
                vocabs,
                prune: PruneReport {
                    constant_dropped,
                    correlated_dropped,
                    unseen_categories: BTreeMap::new(),
                },
            },
            all_constant,
        ))
    }

    /// Encode one state's selected values into the retained feature vector.
    /// Categories outside the training vocabulary encode as all-zeros for
    /// that parameter and are tallied into the report.
    pub fn encode(&mut self, values: &ParamTree) -> Vec<f64> {
        let mut unseen: Vec<String> = Vec::new();
        let out = encode_with(&self.features, values, Some(&mut unseen));
        for source in unseen {
            *self.prune.unseen_categories.entry(source).or_insert(0) += 1;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

fn encode_with(
    features: &[FeatureDesc],
    values: &ParamTree,
    mut unseen: Option<&mut Vec<String>>,
) -> Vec<f64> {
    // Track which categorical sources matched some one-hot column.
    let mut matched: BTreeMap<&str, bool> = BTreeMap::new();
    let mut out = Vec::with_capacity(features.len());
    for f in features {
        let v = match &f.encoding {
            FeatureEncoding::Numeric => numeric_value(values, &f.source).unwrap_or(0.0),
            FeatureEncoding::Flag => flag_value(values, &f.source).unwrap_or(0.0),
            FeatureEncoding::OneHot { category } => {
                let entry = matched.entry(f.source.as_str()).or_insert(false);
                match categorical_value(values, &f.source) {
                    Some(actual) if actual == *category => {
                        *entry = true;
                        1.0
                    }
                    _ => 0.0,
                }
            }
        };
        out.push(v);
    }
    if let Some(unseen) = unseen.as_deref_mut() {
        for (source, hit) in matched {
            if !hit && values.contains_key(source) {
                unseen.push(source.to_string());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmstore::SelectedParam;

    fn col(name: &str, values: &[f64]) -> Column {
        Column {
            name: name.to_string(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn constant_pruning_cases() {
        let cols = vec![
            col("all_zero", &[0.0, 0.0, 0.0, 0.0]),
            col("one_hot_single", &[0.0, 1.0, 0.0, 0.0]),
            col("varying", &[1.0, 2.0, 3.0, 4.0]),
        ];
        let (retained, dropped) = prune_constant_features(&cols);
        assert_eq!(retained, vec![1, 2]);
        assert_eq!(dropped, vec!["all_zero".to_string()]);
    }

    #[test]
    fn all_constant_yields_empty_feature_set() {
        let cols = vec![col("a", &[1.0, 1.0]), col("b", &[2.0, 2.0])];
        let (retained, dropped) = prune_constant_features(&cols);
        assert!(retained.is_empty());
        assert_eq!(dropped.len(), 2);
    }

    #[test]
    fn identical_columns_collapse_to_one() {
        let cols = vec![
            col("b_copy", &[1.0, 2.0, 3.0, 4.0]),
            col("a_original", &[1.0, 2.0, 3.0, 4.0]),
        ];
        let (retained, dropped) = prune_correlated_features(&cols, &[0, 1], 0.95).unwrap();
        // Lexicographically-first name wins.
        assert_eq!(retained, vec![1]);
        assert_eq!(
            dropped,
            vec![("b_copy".to_string(), "a_original".to_string())]
        );
    }

    #[test]
    fn binary_complement_counts_as_correlated() {
        let f1 = [0.0, 1.0, 0.0, 1.0, 1.0];
        let f2: Vec<f64> = f1.iter().map(|v| 1.0 - v).collect();
        let cols = vec![col("f1", &f1), col("f2", &f2)];
        let (retained, dropped) = prune_correlated_features(&cols, &[0, 1], 0.95).unwrap();
        assert_eq!(retained.len(), 1);
        assert_eq!(dropped.len(), 1);
    }

    #[test]
    fn transitive_component_keeps_single_representative() {
        // Three columns with high pairwise correlations; verify the actual
        // correlations by direct computation, then the component collapse.
        let base: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let noise_a: Vec<f64> = (0..40).map(|i| ((i * 7919 + 13) % 17) as f64 * 0.35).collect();
        let noise_b: Vec<f64> = (0..40).map(|i| ((i * 104729 + 5) % 13) as f64 * 0.22).collect();
        let c1 = base.clone();
        let c2: Vec<f64> = base.iter().zip(&noise_a).map(|(x, n)| x + n).collect();
        let c3: Vec<f64> = base.iter().zip(&noise_b).map(|(x, n)| x + n).collect();
        let r12 = pearson(&c1, &c2);
        let r13 = pearson(&c1, &c3);
        let r23 = pearson(&c2, &c3);
        assert!(r12.abs() >= 0.95 && r13.abs() >= 0.95 && r23.abs() >= 0.95,
            "fixture correlations: {r12} {r13} {r23}");
        let cols = vec![col("c1", &c1), col("c2", &c2), col("c3", &c3)];
        let (retained, dropped) = prune_correlated_features(&cols, &[0, 1, 2], 0.95).unwrap();
        assert_eq!(retained.len(), 1);
        assert_eq!(dropped.len(), 2);
    }

    #[test]
    fn zero_variance_column_is_an_internal_error() {
        let cols = vec![col("flat", &[1.0, 1.0, 1.0])];
        assert!(matches!(
            prune_correlated_features(&cols, &[0], 0.9),
            Err(CoreError::Internal(_))
        ));
    }

    #[test]
    fn pruning_is_idempotent() {
        let cols = vec![
            col("a", &[1.0, 2.0, 3.0, 4.0, 4.0]),
            col("b", &[1.0, 2.0, 3.0, 4.0, 4.1]),
            col("c", &[0.0, 0.0, 0.0, 0.0, 0.0]),
            col("d", &[4.0, 1.0, 2.0, 8.0, 3.0]),
        ];
        let (r1, _) = prune_constant_features(&cols);
        let kept: Vec<Column> = r1.iter().map(|&i| cols[i].clone()).collect();
        let (r2, _) = prune_constant_features(&kept);
        assert_eq!(r2.len(), kept.len());

        let (c1, _) = prune_correlated_features(&cols, &r1, 0.95).unwrap();
        let (c2, _) = prune_correlated_features(&cols, &c1, 0.95).unwrap();
        assert_eq!(c1, c2);
    }

    fn manifest() -> SelectedParams {
        SelectedParams {
            params: vec![
                SelectedParam {
                    path: "basic/band".to_string(),
                    kind: ParamKind::Categorical,
                },
                SelectedParam {
                    path: "basic/bandwidth_mhz".to_string(),
                    kind: ParamKind::Numeric,
                },
                SelectedParam {
                    path: "functionalities/f001".to_string(),
                    kind: ParamKind::Flag,
                },
            ],
        }
    }

    fn state(band: &str, bw: i64, f1: bool) -> ParamTree {
        let mut t = ParamTree::new();
        t.insert("basic/band".to_string(), ParamValue::Str(band.to_string()));
        t.insert("basic/bandwidth_mhz".to_string(), ParamValue::Int(bw));
        t.insert("functionalities/f001".to_string(), ParamValue::Bool(f1));
        t
    }

    #[test]
    fn one_hot_orders_categories_and_passes_numeric_through() {
        let s1 = state("n28", 20, false);
        let s2 = state("n41", 40, true);
        let s3 = state("n78", 100, false);
        let train = vec![(&s1, 5), (&s2, 5), (&s3, 5)];
        let (mut enc, _) = ConfigEncoder::fit(&manifest(), &train, 0.95).unwrap();
        let names: Vec<&str> = enc.features.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "basic/band=n28",
                "basic/band=n41",
                "basic/band=n78",
                "basic/bandwidth_mhz",
                "functionalities/f001"
            ]
        );
        let v = enc.encode(&state("n78", 100, false));
        assert_eq!(v, vec![0.0, 0.0, 1.0, 100.0, 0.0]);
    }

    #[test]
    fn unseen_category_encodes_to_zeros_and_is_reported() {
        let s1 = state("n28", 20, false);
        let s2 = state("n41", 40, true);
        let train = vec![(&s1, 3), (&s2, 3)];
        let (mut enc, _) = ConfigEncoder::fit(&manifest(), &train, 0.95).unwrap();
        let v = enc.encode(&state("n78", 60, true));
        // Both band one-hot columns are zero for the unseen band.
        assert_eq!(&v[..2], &[0.0, 0.0]);
        assert_eq!(enc.prune.unseen_categories.get("basic/band"), Some(&1));
    }
}
