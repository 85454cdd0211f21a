use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fragment::{Fragment, RelationPlan};
use super::{NodeEmbeddings, RgcnConfig, RgcnError, SourcePrediction};
use crate::graph::{FactualityLabel, FeatureDims, InfoGraph, NodeId, NodeKind};
use crate::numerics::{softmax, Matrix, Tape, Var};

/// Parameter layout. `values[i]` is named `names[i]`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    /// per node kind
    pub input: [usize; 3],
    pub self_loop: Vec<usize>,
    pub weights: Vec<LayerWeights>,
    pub head_w: usize,
    pub head_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LayerWeights {
    /// One matrix per channel.
    Full(Vec<usize>),
    /// `bases`: B × (hidden·hidden), `coeffs`: channels × B.
    Basis { bases: usize, coeffs: usize },
}

/// Relational GCN encoder with a softmax source classifier on top.
#[derive(Debug, Clone, PartialEq)]
pub struct RgcnModel {
    pub(crate) config: RgcnConfig,
    pub(crate) dims: FeatureDims,
    pub(crate) plan: RelationPlan,
    pub(crate) names: Vec<String>,
    pub(crate) values: Vec<Matrix>,
    pub(crate) layout: Layout,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

impl RgcnModel {
    /// Fresh model with Glorot-uniform weights drawn from `config.seed`.
    pub fn new(config: RgcnConfig, dims: FeatureDims) -> Result<Self, RgcnError> {
        let plan = RelationPlan::new(config.tie_interaction_relations);
        config.validate(plan.len())?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden;
        let mut names = Vec::new();
        let mut values = Vec::new();
        let mut push = |name: String, m: Matrix| {
            names.push(name);
            values.push(m);
            values.len() - 1
        };
        let input = NodeKind::ALL.map(|k| {
            push(format!("input.{k}"), glorot(&mut rng, dims.for_kind(k), h))
        });
        let mut self_loop = Vec::new();
        let mut weights = Vec::new();
        for l in 0..config.layers {
            self_loop.push(push(format!("layer{l}.self"), glorot(&mut rng, h, h)));
            if config.use_basis_decomposition {
                let b = config.num_bases;
                // each basis row is a flattened h×h matrix, scaled like one
                let limit = (6.0 / (2 * h) as f64).sqrt();
                let data = (0..b * h * h)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                let bases = push(
                    format!("layer{l}.bases"),
                    Matrix::from_vec(b, h * h, data).expect("sized"),
                );
                let coeffs = push(format!("layer{l}.coeffs"), glorot(&mut rng, plan.len(), b));
                weights.push(LayerWeights::Basis { bases, coeffs });
            } else {
                let per = plan
                    .channels()
                    .iter()
                    .map(|c| {
                        let suffix = if c.inverse { "_inv" } else { "" };
                        push(
                            format!("layer{l}.{}{suffix}", c.relation),
                            glorot(&mut rng, h, h),
                        )
                    })
                    .collect();
                weights.push(LayerWeights::Full(per));
            }
        }
        let head_w = push("head.weight".into(), glorot(&mut rng, h, FactualityLabel::COUNT));
        let head_b = push("head.bias".into(), Matrix::zeros(1, FactualityLabel::COUNT));
        Ok(Self {
            config,
            dims,
            plan,
            names,
            values,
            layout: Layout {
                input,
                self_loop,
                weights,
                head_w,
                head_b,
            },
        })
    }

    pub fn config(&self) -> &RgcnConfig {
        &self.config
    }

    pub fn dims(&self) -> FeatureDims {
        self.dims
    }

    pub fn relation_plan(&self) -> &RelationPlan {
        &self.plan
    }

    pub fn parameters(&self) -> &[Matrix] {
        &self.values
    }

    pub fn parameters_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.names
    }

    pub fn parameter_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Zeroes the classifier head, which makes every prediction uniform.
    pub fn zero_head(&mut self) {
        let (w, b) = (self.layout.head_w, self.layout.head_b);
        self.values[w] = Matrix::zeros(self.values[w].rows(), self.values[w].cols());
        self.values[b] = Matrix::zeros(1, self.values[b].cols());
    }

    pub fn fragment(&self, g: &InfoGraph, active: &[NodeId]) -> Result<Fragment, RgcnError> {
        if g.dims() != self.dims {
            return Err(RgcnError::DimMismatch {
                model: self.dims,
                graph: g.dims(),
            });
        }
        Ok(Fragment::build(g, active, self.config.layers, &self.plan)?)
    }

    /// Records every parameter as a tape leaf.
    pub(crate) fn leaves(&self, tape: &mut Tape) -> Result<Vec<Var>, RgcnError> {
        self.values
            .iter()
            .map(|m| tape.leaf(m.clone()).map_err(RgcnError::from))
            .collect()
    }

    /// Final-layer embeddings for every fragment node (rows in fragment order).
    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        frag: &Fragment,
    ) -> Result<Var, RgcnError> {
        let n = frag.len();
        let h = self.config.hidden;
        let mut state: Option<Var> = None;
        for k in NodeKind::ALL {
            let rows = &frag.kind_rows[k.slot()];
            if rows.is_empty() {
                continue;
            }
            let x = tape.leaf(frag.features[k.slot()].clone())?;
            let proj = tape.matmul(x, params[self.layout.input[k.slot()]])?;
            let placed = tape.scatter_sum(proj, rows.clone(), n)?;
            state = Some(match state {
                Some(s) => tape.add(s, placed)?,
                None => placed,
            });
        }
        let Some(mut state) = state else {
            return Err(RgcnError::EmptyFragment);
        };

        for l in 0..self.config.layers {
            let mut acc = tape.matmul(state, params[self.layout.self_loop[l]])?;
            // W_c = Σ_b coeffs[c,b] · V_b, i.e. row c of (coeffs · bases)
            let mixed = match &self.layout.weights[l] {
                LayerWeights::Basis { bases, coeffs } => {
                    Some(tape.matmul(params[*coeffs], params[*bases])?)
                }
                LayerWeights::Full(_) => None,
            };
            for (c, msgs) in frag.channels.iter().enumerate() {
                if msgs.receivers.is_empty() {
                    continue;
                }
                let gathered = tape.gather(state, msgs.senders.clone())?;
                let weighted = tape.scale_rows(gathered, msgs.weights.clone())?;
                let agg = tape.scatter_sum(weighted, msgs.receivers.clone(), n)?;
                let w = match (&self.layout.weights[l], mixed) {
                    (LayerWeights::Full(per), _) => params[per[c]],
                    (_, Some(mixed)) => tape.row_as_matrix(mixed, c, h, h)?,
                    (_, None) => unreachable!("basis layers always mix"),
                };
                let msg = tape.matmul(agg, w)?;
                acc = tape.add(acc, msg)?;
            }
            state = if l + 1 < self.config.layers {
                tape.relu(acc)?
            } else {
                acc
            };
        }
        Ok(state)
    }

    /// Logits for the fragment rows in `rows`.
    pub(crate) fn head(
        &self,
        tape: &mut Tape,
        params: &[Var],
        embeddings: Var,
        rows: Vec<usize>,
    ) -> Result<Var, RgcnError> {
        let picked = tape.gather(embeddings, rows)?;
        let logits = tape.matmul(picked, params[self.layout.head_w])?;
        Ok(tape.add_row(logits, params[self.layout.head_b])?)
    }

    fn run(&self, frag: &Fragment) -> Result<(Tape, Var, Vec<Var>), RgcnError> {
        let mut tape = Tape::new();
        let params = self.leaves(&mut tape)?;
        let out = self.forward(&mut tape, &params, frag)?;
        Ok((tape, out, params))
    }

    /// Final-layer embeddings of `active` nodes.
    pub fn encode(&self, g: &InfoGraph, active: &[NodeId]) -> Result<NodeEmbeddings, RgcnError> {
        self.encode_traced(g, active).map(|(e, _)| e)
    }

    /// As [`encode`](Self::encode), also returning every node whose
    /// features were read.
    pub fn encode_traced(
        &self,
        g: &InfoGraph,
        active: &[NodeId],
    ) -> Result<(NodeEmbeddings, Vec<NodeId>), RgcnError> {
        let frag = self.fragment(g, active)?;
        let emb = self.encode_fragment(&frag, active)?;
        Ok((emb, frag.feature_reads().to_vec()))
    }

    pub(crate) fn encode_fragment(
        &self,
        frag: &Fragment,
        active: &[NodeId],
    ) -> Result<NodeEmbeddings, RgcnError> {
        let (tape, out, _) = self.run(frag)?;
        let values = tape.value(out);
        let mut map = BTreeMap::new();
        for &n in active {
            let i = frag.local_index(n).ok_or(RgcnError::NotInFragment(n))?;
            map.insert(n, values.row(i).to_vec());
        }
        Ok(NodeEmbeddings(map))
    }

    /// Softmax class probabilities and argmax label per source.
    pub fn predict_sources(
        &self,
        g: &InfoGraph,
        sources: &[NodeId],
    ) -> Result<BTreeMap<NodeId, SourcePrediction>, RgcnError> {
        if let Some(&bad) = sources.iter().find(|s| s.kind != NodeKind::Source) {
            return Err(RgcnError::NotASource(bad));
        }
        let frag = self.fragment(g, sources)?;
        self.predict_fragment(&frag, sources)
    }

    pub(crate) fn predict_fragment(
        &self,
        frag: &Fragment,
        sources: &[NodeId],
    ) -> Result<BTreeMap<NodeId, SourcePrediction>, RgcnError> {
        if sources.is_empty() {
            return Ok(BTreeMap::new());
        }
        let (mut tape, out, params) = self.run(frag)?;
        let rows = sources
            .iter()
            .map(|&s| frag.local_index(s).ok_or(RgcnError::NotInFragment(s)))
            .collect::<Result<Vec<_>, _>>()?;
        let logits = self.head(&mut tape, &params, out, rows)?;
        let logits = tape.value(logits);
        let mut map = BTreeMap::new();
        for (i, &s) in sources.iter().enumerate() {
            let probs = softmax(logits.row(i))?;
            map.insert(s, SourcePrediction::from_probs([probs[0], probs[1], probs[2]]));
        }
        Ok(map)
    }

    /// Mean cross-entropy over `(source, label)` targets and its gradient
    /// for every parameter.
    pub fn loss_and_gradients(
        &self,
        frag: &Fragment,
        targets: &[(NodeId, FactualityLabel)],
    ) -> Result<(f64, Vec<Option<Matrix>>), RgcnError> {
        let (mut tape, out, params) = self.run(frag)?;
        let loss = self.loss_on(&mut tape, &params, out, frag, targets)?;
        let value = tape.value(loss).get(0, 0);
        let mut grads = tape.backward(loss)?;
        let per_param = params.iter().map(|&p| grads.take(p)).collect();
        Ok((value, per_param))
    }

    /// Loss only, no backward pass.
    pub fn loss(
        &self,
        frag: &Fragment,
        targets: &[(NodeId, FactualityLabel)],
    ) -> Result<f64, RgcnError> {
        let (mut tape, out, params) = self.run(frag)?;
        let loss = self.loss_on(&mut tape, &params, out, frag, targets)?;
        Ok(tape.value(loss).get(0, 0))
    }

    fn loss_on(
        &self,
        tape: &mut Tape,
        params: &[Var],
        out: Var,
        frag: &Fragment,
        targets: &[(NodeId, FactualityLabel)],
    ) -> Result<Var, RgcnError> {
        if targets.is_empty() {
            return Err(RgcnError::EmptyTrainSet);
        }
        let rows = targets
            .iter()
            .map(|(s, _)| frag.local_index(*s).ok_or(RgcnError::NotInFragment(*s)))
            .collect::<Result<Vec<_>, _>>()?;
        let labels = targets.iter().map(|(_, l)| l.index()).collect();
        let logits = self.head(tape, params, out, rows)?;
        Ok(tape.softmax_cross_entropy(logits, labels)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Relation;

    fn tiny_config() -> RgcnConfig {
        RgcnConfig {
            layers: 2,
            hidden: 4,
            ..RgcnConfig::default()
        }
    }

    fn two_nodes() -> InfoGraph {
        let mut g = InfoGraph::new(FeatureDims { user: 2, item: 2 });
        g.add_source(vec![1.0, -0.5], FactualityLabel::High).unwrap();
        g.add_node(NodeKind::Article, vec![0.25, 2.0]).unwrap();
        g.add_edge(NodeId::source(0), NodeId::article(0), Relation::Publishes)
            .unwrap();
        g
    }

    #[test]
    fn zero_head_predicts_uniform() {
        let mut m = RgcnModel::new(tiny_config(), FeatureDims { user: 2, item: 2 }).unwrap();
        m.zero_head();
        let p = m.predict_sources(&two_nodes(), &[NodeId::source(0)]).unwrap();
        for v in p[&NodeId::source(0)].probs {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        // ties go to the lowest label
        assert_eq!(p[&NodeId::source(0)].label, FactualityLabel::Low);
    }

    #[test]
    fn isolated_node_uses_only_self_loops() {
        let cfg = tiny_config();
        let m = RgcnModel::new(cfg.clone(), FeatureDims { user: 2, item: 2 }).unwrap();
        let mut g = InfoGraph::new(FeatureDims { user: 2, item: 2 });
        g.add_node(NodeKind::User, vec![0.3, -0.7]).unwrap();
        let emb = m.encode(&g, &[NodeId::user(0)]).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -0.7]]).unwrap();
        let l = &m.layout;
        let h0 = x.matmul(&m.values[l.input[NodeKind::User.slot()]]).unwrap();
        let h1 = h0.matmul(&m.values[l.self_loop[0]]).unwrap().map(|v| v.max(0.0));
        let h2 = h1.matmul(&m.values[l.self_loop[1]]).unwrap();
        assert!(emb.get(NodeId::user(0)).unwrap().iter().zip(h2.data()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn two_node_graph_matches_hand_unrolled_arithmetic() {
        let cfg = tiny_config();
        let m = RgcnModel::new(cfg, FeatureDims { user: 2, item: 2 }).unwrap();
        let g = two_nodes();
        let emb = m
            .encode(&g, &[NodeId::source(0), NodeId::article(0)])
            .unwrap();
        let l = &m.layout;
        let plan = &m.plan;
        let ch = |rel, inv| {
            plan.channels()
                .iter()
                .position(|c| c.relation == rel && c.inverse == inv)
                .unwrap()
        };
        let w = |layer: usize, c: usize| match &l.weights[layer] {
            LayerWeights::Full(v) => &m.values[v[c]],
            _ => unreachable!(),
        };
        let xs = Matrix::from_rows(&[vec![1.0, -0.5]]).unwrap();
        let xa = Matrix::from_rows(&[vec![0.25, 2.0]]).unwrap();
        let mut hs = xs.matmul(&m.values[l.input[0]]).unwrap();
        let mut ha = xa.matmul(&m.values[l.input[1]]).unwrap();
        let pub_fwd = ch(Relation::Publishes, false);
        let pub_inv = ch(Relation::Publishes, true);
        for layer in 0..2 {
            // article hears its publisher; the source hears its article
            let na = ha
                .matmul(&m.values[l.self_loop[layer]])
                .unwrap()
                .add(&hs.matmul(w(layer, pub_fwd)).unwrap())
                .unwrap();
            let ns = hs
                .matmul(&m.values[l.self_loop[layer]])
                .unwrap()
                .add(&ha.matmul(w(layer, pub_inv)).unwrap())
                .unwrap();
            let act = |m: Matrix| if layer == 0 { m.map(|v| v.max(0.0)) } else { m };
            ha = act(na);
            hs = act(ns);
        }
        let got_s = emb.get(NodeId::source(0)).unwrap();
        let got_a = emb.get(NodeId::article(0)).unwrap();
        for i in 0..4 {
            assert!((got_s[i] - hs.get(0, i)).abs() < 1e-10);
            assert!((got_a[i] - ha.get(0, i)).abs() < 1e-10);
        }
    }

    #[test]
    fn basis_decomposition_runs_and_validates() {
        let cfg = RgcnConfig {
            use_basis_decomposition: true,
            num_bases: 2,
            ..tiny_config()
        };
        let m = RgcnModel::new(cfg, FeatureDims { user: 2, item: 2 }).unwrap();
        let p = m.predict_sources(&two_nodes(), &[NodeId::source(0)]).unwrap();
        let total: f64 = p[&NodeId::source(0)].probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);

        let bad = RgcnConfig {
            use_basis_decomposition: true,
            num_bases: 50,
            ..tiny_config()
        };
        assert!(RgcnModel::new(bad, FeatureDims { user: 2, item: 2 }).is_err());
        let bad = RgcnConfig { hidden: 2, ..tiny_config() };
        assert!(RgcnModel::new(bad, FeatureDims { user: 2, item: 2 }).is_err());
    }

    #[test]
    fn predict_rejects_non_sources() {
        let m = RgcnModel::new(tiny_config(), FeatureDims { user: 2, item: 2 }).unwrap();
        assert!(matches!(
            m.predict_sources(&two_nodes(), &[NodeId::article(0)]),
            Err(RgcnError::NotASource(_))
        ));
    }
}
