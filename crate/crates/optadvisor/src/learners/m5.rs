//! M5-style model tree: a regression tree grown by standard-deviation
//! reduction, pruned bottom-up, with a linear regression model in every node.
//!
//! Each node's linear model may only use features that appear in splits of
//! the subtree rooted at that node, so leaves carry intercept-only models.
//! Prediction routes the query to a leaf and then smooths the value through
//! every ancestor's linear model on the way back to the root, which softens
//! the discontinuities that raw tree predictions have at split boundaries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{FeatureSchema, FeatureVector};

use super::Dataset;

/// Smoothing constant blending a node's linear model into predictions from
/// below: `p' = (n*p + K*q) / (n + K)`.
pub const SMOOTHING_K: f64 = 15.0;
/// Nodes with fewer instances than this are not split further.
const MIN_NODE_SIZE: usize = 4;
/// Growth stops once a node's label spread falls below this fraction of the
/// root's label spread.
const SD_STOP_FRACTION: f64 = 0.05;
/// Ridge term on the feature diagonal of the normal equations; duplicate or
/// constant features would otherwise make the system singular. The intercept
/// is not penalized.
const RIDGE_LAMBDA: f64 = 1e-8;
/// Error-inflation factor used when a node has no more instances than model
/// parameters.
const PRUNE_FACTOR_CAP: f64 = 10.0;

/// Least-squares model over a subset of the schema's features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: BTreeMap<String, f64>,
}

impl LinearModel {
    pub fn constant(value: f64) -> LinearModel {
        LinearModel {
            intercept: value,
            coefficients: BTreeMap::new(),
        }
    }

    pub fn evaluate(&self, query: &FeatureVector) -> Result<f64> {
        let mut value = self.intercept;
        for (name, coef) in &self.coefficients {
            let feature = query
                .get(name)
                .ok_or_else(|| Error::SchemaMismatch(format!("query lacks feature '{name}'")))?;
            value += coef * feature;
        }
        Ok(value)
    }
}

/// A split sends instances with `feature <= threshold` to the left child.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M5Split {
    pub feature: String,
    pub threshold: f64,
    pub left: Box<M5Node>,
    pub right: Box<M5Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M5Node {
    /// Number of training instances that reached this node.
    pub n: usize,
    pub model: LinearModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<M5Split>,
}

impl M5Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn leaf_count(&self) -> usize {
        match &self.split {
            None => 1,
            Some(s) => s.left.leaf_count() + s.right.leaf_count(),
        }
    }
}

/// A trained model tree.
#[derive(Debug, Clone)]
pub struct M5Model {
    schema: FeatureSchema,
    smoothing_k: f64,
    root: M5Node,
}

#[derive(Serialize, Deserialize)]
pub(super) struct M5Payload {
    pub smoothing_k: f64,
    pub root: M5Node,
}

impl M5Model {
    pub fn from_parts(schema: FeatureSchema, smoothing_k: f64, root: M5Node) -> M5Model {
        M5Model {
            schema,
            smoothing_k,
            root,
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn root(&self) -> &M5Node {
        &self.root
    }

    pub fn smoothing_k(&self) -> f64 {
        self.smoothing_k
    }

    pub(super) fn to_payload(&self) -> M5Payload {
        M5Payload {
            smoothing_k: self.smoothing_k,
            root: self.root.clone(),
        }
    }

    pub(super) fn from_payload(schema: FeatureSchema, payload: M5Payload) -> Result<M5Model> {
        fn check(node: &M5Node, schema: &FeatureSchema) -> Result<()> {
            for name in node.model.coefficients.keys() {
                if schema.index_of(name).is_none() {
                    return Err(Error::CorruptPayload(format!(
                        "model coefficient on unknown feature '{name}'"
                    )));
                }
            }
            if let Some(split) = &node.split {
                if schema.index_of(&split.feature).is_none() {
                    return Err(Error::CorruptPayload(format!(
                        "split on unknown feature '{}'",
                        split.feature
                    )));
                }
                if !split.threshold.is_finite() {
                    return Err(Error::CorruptPayload(
                        "non-finite split threshold".to_string(),
                    ));
                }
                check(&split.left, schema)?;
                check(&split.right, schema)?;
            }
            Ok(())
        }
        check(&payload.root, &schema)?;
        Ok(M5Model {
            schema,
            smoothing_k: payload.smoothing_k,
            root: payload.root,
        })
    }
}

/* ------------------------- split-quality measures ------------------------ */

/// Population standard deviation (the biased, divide-by-n form).
pub fn population_sd(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.max(0.0).sqrt()
}

/// Standard-deviation reduction of splitting `parent` into `left` and
/// `right`: `sd(T) - sum_i (|T_i|/|T|) * sd(T_i)`. Non-negative for every
/// true partition of `parent` under population standard deviation.
pub fn sd_reduction(parent: &[f64], left: &[f64], right: &[f64]) -> f64 {
    let n = parent.len() as f64;
    population_sd(parent)
        - (left.len() as f64 / n) * population_sd(left)
        - (right.len() as f64 / n) * population_sd(right)
}

fn sd_from_sums(sum: f64, sum_sq: f64, n: f64) -> f64 {
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0).sqrt()
}

/* --------------------------------- build --------------------------------- */

struct BuildNode {
    indices: Vec<usize>,
    split: Option<(usize, f64, Box<BuildNode>, Box<BuildNode>)>,
}

struct Builder<'a> {
    rows: Vec<&'a [f64]>,
    labels: Vec<f64>,
    /// Feature indices ordered by feature name; equal-gain splits resolve
    /// toward the lexicographically smaller name, then smaller threshold.
    name_order: Vec<usize>,
    root_sd: f64,
}

impl<'a> Builder<'a> {
    fn node_sd(&self, indices: &[usize]) -> f64 {
        let labels: Vec<f64> = indices.iter().map(|&i| self.labels[i]).collect();
        population_sd(&labels)
    }

    fn best_split(&self, indices: &[usize]) -> Option<(usize, f64, f64)> {
        let n = indices.len() as f64;
        let node_mean = indices.iter().map(|&i| self.labels[i]).sum::<f64>() / n;
        // Labels are centered on the node mean before the running-sums pass:
        // the sums formula is unstable when the mean dwarfs the spread, and
        // split choices must not drift under uniform label shifts.
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for &i in indices {
            let centered = self.labels[i] - node_mean;
            sum += centered;
            sum_sq += centered * centered;
        }
        let sd_all = sd_from_sums(sum, sum_sq, n);

        let mut best: Option<(usize, f64, f64)> = None; // (feature, threshold, sdr)
        for &feature in &self.name_order {
            let mut pairs: Vec<(f64, f64)> = indices
                .iter()
                .map(|&i| (self.rows[i][feature], self.labels[i] - node_mean))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

            let (mut left_sum, mut left_sq) = (0.0, 0.0);
            for i in 0..pairs.len() - 1 {
                left_sum += pairs[i].1;
                left_sq += pairs[i].1 * pairs[i].1;
                if pairs[i].0 == pairs[i + 1].0 {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = n - nl;
                let sdr = sd_all
                    - (nl / n) * sd_from_sums(left_sum, left_sq, nl)
                    - (nr / n) * sd_from_sums(sum - left_sum, sum_sq - left_sq, nr);
                let mut threshold = (pairs[i].0 + pairs[i + 1].0) / 2.0;
                if threshold >= pairs[i + 1].0 {
                    // adjacent floats: the midpoint can round up to the right
                    // value, which would stop `<=` from separating the sides
                    threshold = pairs[i].0;
                }
                // strict > keeps the first candidate in (name, threshold)
                // order among ties
                if best.is_none_or(|(_, _, b)| sdr > b) {
                    best = Some((feature, threshold, sdr));
                }
            }
        }
        best
    }

    fn grow(&self, indices: Vec<usize>) -> BuildNode {
        let sd = self.node_sd(&indices);
        if indices.len() < MIN_NODE_SIZE || sd < SD_STOP_FRACTION * self.root_sd {
            return BuildNode {
                indices,
                split: None,
            };
        }
        let Some((feature, threshold, sdr)) = self.best_split(&indices) else {
            return BuildNode {
                indices,
                split: None,
            };
        };
        if sdr <= 0.0 {
            return BuildNode {
                indices,
                split: None,
            };
        }
        let (left, right): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.rows[i][feature] <= threshold);
        let left = Box::new(self.grow(left));
        let right = Box::new(self.grow(right));
        BuildNode {
            indices,
            split: Some((feature, threshold, left, right)),
        }
    }

    /// Error-inflation factor `(n+v)/(n-v)` for a model that used `v`
    /// parameters to fit `n` points, capped when `n <= v`.
    fn prune_factor(n: usize, v: usize) -> f64 {
        if n <= v {
            PRUNE_FACTOR_CAP
        } else {
            (n + v) as f64 / (n - v) as f64
        }
    }

    /// Bottom-up pruning: a subtree collapses to a leaf when the inflated
    /// error of the constant model the node would keep is no worse than the
    /// weighted inflated error of its children. Returns the node's estimated
    /// error.
    fn prune(&self, node: &mut BuildNode) -> f64 {
        let n = node.indices.len();
        let mean = node.indices.iter().map(|&i| self.labels[i]).sum::<f64>() / n as f64;
        let mae = node
            .indices
            .iter()
            .map(|&i| (self.labels[i] - mean).abs())
            .sum::<f64>()
            / n as f64;
        let leaf_err = mae * Self::prune_factor(n, 1);

        if let Some((_, _, left, right)) = &mut node.split {
            let err_left = self.prune(left);
            let err_right = self.prune(right);
            let subtree_err = (left.indices.len() as f64 * err_left
                + right.indices.len() as f64 * err_right)
                / n as f64;
            if leaf_err <= subtree_err {
                node.split = None;
                leaf_err
            } else {
                subtree_err
            }
        } else {
            leaf_err
        }
    }

    /// Fits the per-node linear models on the pruned structure. A node may
    /// only use features named by splits in its own subtree, which leaves
    /// leaf models intercept-only.
    fn fit_models(&self, node: &BuildNode, schema: &FeatureSchema) -> M5Node {
        let mut subtree_features = BTreeSet::new();
        let split = node
            .split
            .as_ref()
            .map(|(feature, threshold, left, right)| {
                let left = self.fit_models(left, schema);
                let right = self.fit_models(right, schema);
                collect_split_features(&left, &mut subtree_features);
                collect_split_features(&right, &mut subtree_features);
                subtree_features.insert(schema.names()[*feature].clone());
                M5Split {
                    feature: schema.names()[*feature].clone(),
                    threshold: *threshold,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            });

        let model = if subtree_features.is_empty() {
            let mean = node.indices.iter().map(|&i| self.labels[i]).sum::<f64>()
                / node.indices.len() as f64;
            LinearModel::constant(mean)
        } else {
            let features: Vec<usize> = subtree_features
                .iter()
                .map(|name| schema.index_of(name).expect("feature from schema"))
                .collect();
            self.ridge_fit(&node.indices, &features, schema)
        };

        M5Node {
            n: node.indices.len(),
            model,
            split,
        }
    }

    /// Least squares via the normal equations with a small ridge term on the
    /// feature diagonal (the intercept stays unpenalized so that shifting all
    /// labels by a constant shifts predictions by exactly that constant).
    fn ridge_fit(
        &self,
        indices: &[usize],
        features: &[usize],
        schema: &FeatureSchema,
    ) -> LinearModel {
        let m = features.len() + 1;
        let mut a = vec![vec![0.0f64; m]; m];
        let mut b = vec![0.0f64; m];
        for &idx in indices {
            let row = self.rows[idx];
            let label = self.labels[idx];
            let mut x = Vec::with_capacity(m);
            x.push(1.0);
            x.extend(features.iter().map(|&f| row[f]));
            for i in 0..m {
                b[i] += x[i] * label;
                for j in 0..m {
                    a[i][j] += x[i] * x[j];
                }
            }
        }
        for (i, row) in a.iter_mut().enumerate().skip(1) {
            row[i] += RIDGE_LAMBDA;
        }

        let solution = solve(a, b);
        let mut coefficients = BTreeMap::new();
        for (slot, &feature) in solution.iter().skip(1).zip(features) {
            coefficients.insert(schema.names()[feature].clone(), *slot);
        }
        LinearModel {
            intercept: solution[0],
            coefficients,
        }
    }
}

fn collect_split_features(node: &M5Node, into: &mut BTreeSet<String>) {
    if let Some(split) = &node.split {
        into.insert(split.feature.clone());
        collect_split_features(&split.left, into);
        collect_split_features(&split.right, into);
    }
}

/// Gaussian elimination with partial pivoting. The ridge term keeps the
/// system positive definite, so pivots stay away from zero.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let m = b.len();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty system");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        if diag == 0.0 {
            continue; // fully degenerate column; its coefficient stays 0
        }
        for row in col + 1..m {
            let factor = a[row][col] / diag;
            if factor == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(row);
            for (k, value) in lower[0][col..m].iter_mut().enumerate() {
                *value -= factor * upper[col][col + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0f64; m];
    for col in (0..m).rev() {
        let mut value = b[col];
        for k in col + 1..m {
            value -= a[col][k] * x[k];
        }
        x[col] = if a[col][col] != 0.0 {
            value / a[col][col]
        } else {
            0.0
        };
    }
    x
}

/// Grows, prunes, and fits a model tree on the dataset.
pub fn m5_build(data: &Dataset) -> Result<M5Model> {
    if data.is_empty() {
        return Err(Error::EmptyDataset(
            "m5 training needs at least one instance".to_string(),
        ));
    }
    for instance in data.instances() {
        if !instance.label.is_finite() {
            return Err(Error::InvalidParam(format!(
                "non-finite label {}",
                instance.label
            )));
        }
    }
    let rows: Vec<&[f64]> = data
        .instances()
        .iter()
        .map(|i| i.features.values())
        .collect();
    let labels = data.labels();
    let mut name_order: Vec<usize> = (0..data.schema().len()).collect();
    name_order.sort_by(|&a, &b| data.schema().names()[a].cmp(&data.schema().names()[b]));
    let root_sd = population_sd(&labels);

    let builder = Builder {
        rows,
        labels,
        name_order,
        root_sd,
    };
    let mut tree = builder.grow((0..data.len()).collect());
    builder.prune(&mut tree);
    let root = builder.fit_models(&tree, data.schema());
    Ok(M5Model {
        schema: data.schema().clone(),
        smoothing_k: SMOOTHING_K,
        root,
    })
}

/// Routes the query to a leaf, then smooths the leaf value through every
/// ancestor's linear model: `p' = (n*p + K*q) / (n + K)`. Queries exactly on
/// a split boundary route left.
pub fn m5_predict(model: &M5Model, query: &FeatureVector) -> Result<f64> {
    if query.schema() != &model.schema {
        return Err(Error::SchemaMismatch(
            "query does not match the model's feature schema".to_string(),
        ));
    }
    let mut ancestors = Vec::new();
    let mut node = &model.root;
    while let Some(split) = &node.split {
        let value = query.get(&split.feature).ok_or_else(|| {
            Error::SchemaMismatch(format!("query lacks split feature '{}'", split.feature))
        })?;
        ancestors.push(node);
        node = if value <= split.threshold {
            &split.left
        } else {
            &split.right
        };
    }

    let mut prediction = node.model.evaluate(query)?;
    for ancestor in ancestors.iter().rev() {
        let q = ancestor.model.evaluate(query)?;
        let n = ancestor.n as f64;
        prediction = (n * prediction + model.smoothing_k * q) / (n + model.smoothing_k);
    }
    Ok(prediction)
}

/// Walks the tree asserting that every nonzero coefficient names a feature
/// used by some split in that node's subtree (so leaf models are
/// intercept-only). Returns the offending node description on violation.
pub fn verify_feature_confinement(model: &M5Model) -> std::result::Result<(), String> {
    fn walk(node: &M5Node) -> std::result::Result<BTreeSet<String>, String> {
        let mut features = BTreeSet::new();
        if let Some(split) = &node.split {
            features.insert(split.feature.clone());
            features.extend(walk(&split.left)?);
            features.extend(walk(&split.right)?);
        }
        for (name, coef) in &node.model.coefficients {
            if *coef != 0.0 && !features.contains(name) {
                return Err(format!(
                    "node with n={} has a coefficient on '{name}' not named by any split in its subtree",
                    node.n
                ));
            }
        }
        Ok(features)
    }
    walk(&model.root).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optdb::TrainingInstance;
    use rand::{Rng, SeedableRng};

    fn dataset(points: &[(Vec<f64>, f64)]) -> Dataset {
        let names: Vec<String> = (0..points[0].0.len()).map(|i| format!("f{i}")).collect();
        let schema = FeatureSchema::new(names).unwrap();
        let instances = points
            .iter()
            .map(|(values, label)| TrainingInstance {
                features: FeatureVector::new(schema.clone(), values.clone()).unwrap(),
                label: *label,
            })
            .collect();
        Dataset::new(schema, instances).unwrap()
    }

    #[test]
    fn constant_labels_collapse_to_single_leaf() {
        let points: Vec<(Vec<f64>, f64)> = (0..20).map(|i| (vec![i as f64], 2.5)).collect();
        let data = dataset(&points);
        let model = m5_build(&data).unwrap();
        assert!(model.root().is_leaf());
        let q = FeatureVector::new(model.schema().clone(), vec![100.0]).unwrap();
        assert_eq!(m5_predict(&model, &q).unwrap(), 2.5);
    }

    #[test]
    fn sd_of_1_1_5_5_is_two_and_perfect_split_reduces_it_fully() {
        assert_eq!(population_sd(&[1.0, 1.0, 5.0, 5.0]), 2.0);
        let sdr = sd_reduction(&[1.0, 1.0, 5.0, 5.0], &[1.0, 1.0], &[5.0, 5.0]);
        assert_eq!(sdr, 2.0);
    }

    #[test]
    fn splits_perfectly_separable_labels() {
        let points = vec![
            (vec![1.0], 1.0),
            (vec![2.0], 1.0),
            (vec![3.0], 5.0),
            (vec![4.0], 5.0),
        ];
        let model = m5_build(&dataset(&points)).unwrap();
        let split = model.root().split.as_ref().expect("root splits");
        assert_eq!(split.feature, "f0");
        assert_eq!(split.threshold, 2.5);
    }

    #[test]
    fn boundary_queries_route_left() {
        // Hand-built two-leaf tree: boundary query must see the left leaf.
        let schema = FeatureSchema::new(vec!["f0".to_string()]).unwrap();
        let root = M5Node {
            n: 10,
            model: LinearModel::constant(2.0),
            split: Some(M5Split {
                feature: "f0".to_string(),
                threshold: 0.5,
                left: Box::new(M5Node {
                    n: 5,
                    model: LinearModel::constant(1.0),
                    split: None,
                }),
                right: Box::new(M5Node {
                    n: 5,
                    model: LinearModel::constant(3.0),
                    split: None,
                }),
            }),
        };
        let model = M5Model::from_parts(schema.clone(), SMOOTHING_K, root);
        let boundary = FeatureVector::new(schema.clone(), vec![0.5]).unwrap();
        let right = FeatureVector::new(schema, vec![0.6]).unwrap();
        // left leaf 1.0 smoothed through root 2.0: (10*1 + 15*2) / 25 = 1.6
        assert!((m5_predict(&model, &boundary).unwrap() - 1.6).abs() < 1e-12);
        // right leaf 3.0: (10*3 + 15*2) / 25 = 2.4
        assert!((m5_predict(&model, &right).unwrap() - 2.4).abs() < 1e-12);
    }

    #[test]
    fn smoothing_follows_the_stated_recurrence() {
        let schema = FeatureSchema::new(vec!["f0".to_string()]).unwrap();
        let mut coefficients = BTreeMap::new();
        coefficients.insert("f0".to_string(), 1.0);
        let root = M5Node {
            n: 10,
            model: LinearModel {
                intercept: 2.0,
                coefficients,
            },
            split: Some(M5Split {
                feature: "f0".to_string(),
                threshold: 0.5,
                left: Box::new(M5Node {
                    n: 6,
                    model: LinearModel::constant(1.0),
                    split: None,
                }),
                right: Box::new(M5Node {
                    n: 4,
                    model: LinearModel::constant(3.0),
                    split: None,
                }),
            }),
        };
        let model = M5Model::from_parts(schema.clone(), SMOOTHING_K, root);
        let q = FeatureVector::new(schema, vec![0.2]).unwrap();
        // leaf value 1.0; root model value 2.0 + 1.0*0.2 = 2.2
        // smoothed: (10*1.0 + 15*2.2) / (10 + 15) = 43/25
        assert!((m5_predict(&model, &q).unwrap() - 43.0 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_noiseless_linear_relationship() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let points: Vec<(Vec<f64>, f64)> = (0..200)
            .map(|_| {
                let f1 = rng.gen_range(0.0..1.0);
                let f2 = rng.gen_range(0.0..1.0);
                (vec![f1, f2], 1.0 + 0.5 * f1 - 0.3 * f2)
            })
            .collect();
        let data = dataset(&points);
        let model = m5_build(&data).unwrap();
        verify_feature_confinement(&model).unwrap();

        let mut sq_sum = 0.0;
        let held_out = 100;
        for _ in 0..held_out {
            let f1 = rng.gen_range(0.0..1.0);
            let f2 = rng.gen_range(0.0..1.0);
            let truth = 1.0 + 0.5 * f1 - 0.3 * f2;
            let q = FeatureVector::new(model.schema().clone(), vec![f1, f2]).unwrap();
            let p = m5_predict(&model, &q).unwrap();
            sq_sum += (p - truth) * (p - truth);
        }
        let rmse = (sq_sum / held_out as f64).sqrt();
        assert!(rmse < 0.01, "held-out rmse {rmse}");
    }

    #[test]
    fn confinement_holds_on_noisy_trees() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let points: Vec<(Vec<f64>, f64)> = (0..80)
                .map(|_| {
                    let row: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    let label = row[0].max(0.0) + 0.2 * row[2] + rng.gen_range(-0.1..0.1);
                    (row, label)
                })
                .collect();
            let model = m5_build(&dataset(&points)).unwrap();
            verify_feature_confinement(&model).unwrap();
        }
    }

    #[test]
    fn label_shift_moves_predictions_by_the_same_constant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let points: Vec<(Vec<f64>, f64)> = (0..60)
            .map(|_| {
                let row: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
                let label = 2.0 * row[0] - row[1] + rng.gen_range(-0.05..0.05);
                (row, label)
            })
            .collect();
        let shifted: Vec<(Vec<f64>, f64)> =
            points.iter().map(|(r, l)| (r.clone(), l + 7.5)).collect();
        let base = m5_build(&dataset(&points)).unwrap();
        let moved = m5_build(&dataset(&shifted)).unwrap();
        for _ in 0..20 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let qa = FeatureVector::new(base.schema().clone(), q.clone()).unwrap();
            let qb = FeatureVector::new(moved.schema().clone(), q).unwrap();
            let pa = m5_predict(&base, &qa).unwrap();
            let pb = m5_predict(&moved, &qb).unwrap();
            assert!((pb - pa - 7.5).abs() < 1e-9, "pa={pa} pb={pb}");
        }
    }

    #[test]
    fn adjacent_float_values_still_separate() {
        // midpoints of adjacent floats can round up to the right-hand value;
        // the split must still partition both sides non-empty
        let a = 1.0 + f64::EPSILON;
        let b = 1.0 + 2.0 * f64::EPSILON;
        assert!((a + b) / 2.0 >= b, "precondition: midpoint rounds up");
        let points = vec![
            (vec![a], 1.0),
            (vec![a], 1.0),
            (vec![b], 5.0),
            (vec![b], 5.0),
        ];
        let model = m5_build(&dataset(&points)).unwrap();
        let split = model.root().split.as_ref().expect("root splits");
        assert_eq!(split.threshold, a);
        assert_eq!(split.left.n, 2);
        assert_eq!(split.right.n, 2);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        let schema = FeatureSchema::new(vec!["f0".to_string()]).unwrap();
        let empty = Dataset::new(schema.clone(), vec![]).unwrap();
        assert!(matches!(m5_build(&empty), Err(Error::EmptyDataset(_))));

        let bad = Dataset::new(
            schema.clone(),
            vec![TrainingInstance {
                features: FeatureVector::new(schema, vec![0.0]).unwrap(),
                label: f64::NAN,
            }],
        )
        .unwrap();
        assert!(matches!(m5_build(&bad), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn sdr_is_non_negative_on_random_partitions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(2..40);
            let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let cut = rng.gen_range(1..n);
            let sdr = sd_reduction(&labels, &labels[..cut], &labels[cut..]);
            assert!(sdr >= -1e-12, "sdr={sdr}");
        }
    }
}
