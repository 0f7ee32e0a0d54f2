use graph2graph::autodiff::Tape;
use graph2graph::canon::canonical_permutation;
use graph2graph::graph::to_sequence;
use graph2graph::loss::{focal_loss, EdgeMask, FocalConfig};
use graph2graph::model::{ContextMode, EdgeKeys, EncoderMode, Feed, G2GModel, ModelConfig};
use graph2graph::nn::param_grad_check;
use graph2graph::{Error, Graph};

fn tiny(width: usize) -> ModelConfig {
    ModelConfig {
        width,
        edge_hidden: 3,
        node_hidden: 2,
        down_hidden: 2,
        emb_dim: 2,
        head_hidden: vec![3],
        attn_hidden: 3,
        encoder: EncoderMode::Bidirectional,
        node_context: ContextMode::Fixed,
        edge_context: ContextMode::Fixed,
        edge_keys: EdgeKeys::Row,
        seed: 5,
    }
}

fn house() -> Graph {
    Graph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)]).unwrap()
}

fn saturate(model: &mut G2GModel, bias: f64) {
    let id = model.head_output_bias();
    model.params_mut().get_mut(id).data_mut()[0] = bias;
}

#[test]
fn same_seed_same_model() {
    let a = G2GModel::new(ModelConfig::max_clique(8)).unwrap();
    let b = G2GModel::new(ModelConfig::max_clique(8)).unwrap();
    assert_eq!(a.params().tensors(), b.params().tensors());
    let g = house();
    assert_eq!(a.run_model(&g, 0.5, false).unwrap(), b.run_model(&g, 0.5, false).unwrap());

    let mut c = ModelConfig::max_clique(8);
    c.seed = 1;
    let c = G2GModel::new(c).unwrap();
    assert_ne!(a.params().tensors(), c.params().tensors());
}

#[test]
fn zero_parameters_give_half_everywhere() {
    let mut model = G2GModel::new(ModelConfig::max_clique(6)).unwrap();
    for t in model.params_mut().tensors_mut() {
        t.data_mut().fill(0.0);
    }
    let pred = model.run_model(&house(), 0.5, false).unwrap();
    assert_eq!(pred.probabilities.len(), 10);
    assert!(pred.probabilities.iter().all(|&(_, _, p)| p == 0.5));
    // 0.5 is not above the threshold
    assert_eq!(pred.graph.edge_count(), 0);
}

#[test]
fn thresholds_and_masking_with_saturated_head() {
    let mut model = G2GModel::new(ModelConfig::max_clique(6)).unwrap();
    saturate(&mut model, 40.0);
    let g = house();

    let free = model.run_model(&g, 0.0, false).unwrap();
    assert_eq!(free.graph.edge_set(), Graph::complete(5).edge_set());
    assert!(free.probabilities.iter().all(|&(_, _, p)| p > 1.0 - 1e-12));

    let none = model.run_model(&g, 1.0, false).unwrap();
    assert_eq!(none.graph.edge_count(), 0);

    let masked = model.run_model(&g, 0.5, true).unwrap();
    assert_eq!(masked.graph.edge_set(), g.edge_set());

    saturate(&mut model, -40.0);
    let low = model.run_model(&g, 0.0, false).unwrap();
    assert_eq!(low.graph.edge_set(), Graph::complete(5).edge_set());
    assert_eq!(model.run_model(&g, 0.5, false).unwrap().graph.edge_count(), 0);
}

#[test]
fn output_sizes_follow_node_count() {
    let model = G2GModel::new(tiny(7)).unwrap();
    for n in 1..=7 {
        let g = Graph::path(n);
        let pred = model.run_model(&g, 0.5, false).unwrap();
        assert_eq!(pred.probabilities.len(), n * (n - 1) / 2);
        assert_eq!(pred.graph.n(), n);
    }
    assert!(matches!(
        model.run_model(&Graph::path(8), 0.5, false),
        Err(Error::WidthExceeded { nodes: 8, width: 7 })
    ));
}

#[test]
fn relabelled_inputs_decode_identically() {
    let model = G2GModel::new(ModelConfig::max_clique(8)).unwrap();
    let g = Graph::from_edges(7, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 6), (6, 3)]).unwrap();
    let perm = [3, 6, 0, 5, 1, 4, 2];
    let h = g.reorder(&perm).unwrap();
    let a = model.run_model(&g, 0.5, false).unwrap();
    let b = model.run_model(&h, 0.5, false).unwrap();
    assert_eq!(a.canonical, b.canonical);
    let mut pa: Vec<u64> = a.probabilities.iter().map(|x| x.2.to_bits()).collect();
    let mut pb: Vec<u64> = b.probabilities.iter().map(|x| x.2.to_bits()).collect();
    pa.sort_unstable();
    pb.sort_unstable();
    assert_eq!(pa, pb);
}

#[test]
fn free_running_feeds_back_its_own_bits() {
    let model = G2GModel::new(tiny(6)).unwrap();
    let g = house();
    let canon = g.reorder(&canonical_permutation(&g)).unwrap();
    let seq = to_sequence(&canon, 6).unwrap();
    let (mut tape, bind) = model.frozen_tape();
    let enc = model.encode(&mut tape, &bind, &seq).unwrap();
    let free = model.generate(&mut tape, &bind, &enc, 5, 0.5, None).unwrap();
    let teach = model.decode(&mut tape, &bind, &enc, 5, Feed::Teacher(&free.hard)).unwrap();
    // teacher forcing on the model's own output reproduces the run exactly
    assert_eq!(free.values, teach.values);
    assert_eq!(free.hard, teach.hard);
}

#[test]
fn teacher_bits_only_affect_later_positions() {
    let model = G2GModel::new(tiny(6)).unwrap();
    let g = house();
    let seq = to_sequence(&g, 6).unwrap();
    let other = to_sequence(&Graph::complete(5), 6).unwrap();
    let (mut tape, bind) = model.frozen_tape();
    let enc = model.encode(&mut tape, &bind, &seq).unwrap();
    let a = model.decode_teacher_forced(&mut tape, &bind, &enc, &seq, 5).unwrap();
    let b = model.decode_teacher_forced(&mut tape, &bind, &enc, &other, 5).unwrap();
    // the first output sees no target bits; every later one does
    assert_eq!(a.values[0], b.values[0]);
    assert_ne!(a.values[1..], b.values[1..]);
}

#[test]
fn bidirectional_states_see_later_vectors() {
    let g1 = Graph::path(5);
    let mut g2 = g1.clone();
    g2.add_edge(4, 0).unwrap();
    let s1 = to_sequence(&g1, 5).unwrap();
    let s2 = to_sequence(&g2, 5).unwrap();
    for (mode, differs) in [(EncoderMode::Bidirectional, true), (EncoderMode::ForwardOnly, false)] {
        let mut c = tiny(5);
        c.encoder = mode;
        let model = G2GModel::new(c).unwrap();
        let (mut tape, bind) = model.frozen_tape();
        let e1 = model.encode(&mut tape, &bind, &s1).unwrap();
        let e2 = model.encode(&mut tape, &bind, &s2).unwrap();
        let first1 = tape.value(e1.node_hidden[0]).clone();
        let first2 = tape.value(e2.node_hidden[0]).clone();
        assert_eq!(first1.numel(), model.config().state_dim());
        assert_eq!(first1 != first2, differs, "{mode:?}");
        assert_ne!(tape.value(e1.final_state), tape.value(e2.final_state));
    }
}

#[test]
fn latent_vectors_need_forward_encoder() {
    let ae = G2GModel::new(ModelConfig::autoencoder(6)).unwrap();
    let p4 = ae.encode_latent(&Graph::path(4)).unwrap();
    let k4 = ae.encode_latent(&Graph::complete(4)).unwrap();
    assert_eq!(p4.len(), 128);
    assert_ne!(p4, k4);
    assert!(ae.params().find("node_attn.v").is_none());

    let mc = G2GModel::new(ModelConfig::max_clique(6)).unwrap();
    assert!(mc.encode_latent(&Graph::path(4)).is_err());
}

fn check_gradients(config: ModelConfig, all_pairs: bool) {
    let model = G2GModel::new(config).unwrap();
    let g = house();
    let canon = g.reorder(&canonical_permutation(&g)).unwrap();
    let seq = to_sequence(&canon, model.width()).unwrap();
    let target_graph = Graph::from_edges(5, [(0, 1), (1, 4), (0, 4)]).unwrap();
    let target = to_sequence(&target_graph.reorder(&canonical_permutation(&g)).unwrap(), model.width()).unwrap();
    let mask = if all_pairs {
        EdgeMask::all_pairs(5)
    } else {
        EdgeMask::input_edges(&seq, 5)
    };
    let flat = target.flatten()[..10].to_vec();
    let errs = param_grad_check(
        model.params(),
        |tape: &mut Tape, bind| {
            let enc = model.encode(tape, bind, &seq)?;
            let out = model.decode_teacher_forced(tape, bind, &enc, &target, 5)?;
            focal_loss(tape, out.probs, &flat, &mask, FocalConfig::default())
        },
        1e-4,
    )
    .unwrap();
    for (name, err) in errs {
        assert!(err < 1e-4, "{name}: relative error {err}");
    }
}

#[test]
fn gradients_fixed_attention() {
    check_gradients(tiny(6), false);
}

#[test]
fn gradients_learned_attention() {
    let mut c = tiny(6);
    c.node_context = ContextMode::Learned;
    c.edge_context = ContextMode::Learned;
    check_gradients(c.clone(), true);
    c.edge_keys = EdgeKeys::All;
    check_gradients(c, true);
}

#[test]
fn gradients_autoencoder_layout() {
    let mut c = tiny(6);
    c.encoder = EncoderMode::ForwardOnly;
    c.node_context = ContextMode::Latent;
    c.edge_context = ContextMode::Off;
    check_gradients(c, true);
}

#[test]
fn ablations_change_parameter_layout() {
    let base = G2GModel::new(tiny(6)).unwrap();
    let mut c = tiny(6);
    c.node_context = ContextMode::Off;
    c.edge_context = ContextMode::Off;
    let off = G2GModel::new(c).unwrap();
    assert!(off.params().num_scalars() < base.params().num_scalars());
    let mut c = tiny(6);
    c.node_context = ContextMode::Learned;
    let learned = G2GModel::new(c).unwrap();
    assert!(learned.params().find("node_attn.v").is_some());
    assert!(base.params().find("node_attn.v").is_none());
}

#[test]
fn zero_dynamics_are_constant_per_position() {
    let mut model = G2GModel::new(tiny(5)).unwrap();
    for t in model.params_mut().tensors_mut() {
        t.data_mut().fill(0.0);
    }
    let seq = to_sequence(&Graph::empty(5), 5).unwrap();
    let (mut tape, bind) = model.frozen_tape();
    let enc = model.encode(&mut tape, &bind, &seq).unwrap();
    for t in enc.snapshot(&tape) {
        assert!(t.data().iter().all(|&x| x == 0.0));
    }
    let again = model.encode(&mut tape, &bind, &seq).unwrap();
    assert_eq!(enc.snapshot(&tape), again.snapshot(&tape));
}

#[test]
fn empty_target_gives_empty_probabilities() {
    let model = G2GModel::new(tiny(5)).unwrap();
    let seq = to_sequence(&Graph::empty(1), 5).unwrap();
    let (mut tape, bind) = model.frozen_tape();
    let enc = model.encode(&mut tape, &bind, &seq).unwrap();
    let out = model.decode_teacher_forced(&mut tape, &bind, &enc, &seq, 1).unwrap();
    assert_eq!(tape.value(out.probs).numel(), 0);
    assert!(out.values.is_empty());
    assert!(model.generate(&mut tape, &bind, &enc, 6, 0.5, None).is_err());
}

#[test]
fn probability_of_output_matches_cross_entropy() {
    let model = G2GModel::new(tiny(6)).unwrap();
    let g = house();
    let seq = to_sequence(&g, 6).unwrap();
    let y = to_sequence(&Graph::from_edges(5, [(0, 1), (2, 4)]).unwrap(), 6).unwrap();
    let (mut tape, bind) = model.frozen_tape();
    let enc = model.encode(&mut tape, &bind, &seq).unwrap();
    let out = model.decode_teacher_forced(&mut tape, &bind, &enc, &y, 5).unwrap();
    let bits = y.flatten();
    let product: f64 = out
        .values
        .iter()
        .zip(&bits)
        .map(|(&p, &b)| if b == 1 { p } else { 1.0 - p })
        .product();
    let ce = focal_loss(&mut tape, out.probs, &bits[..10], &EdgeMask::all_pairs(5), FocalConfig::new(0.0).unwrap()).unwrap();
    let ce = tape.value(ce).item();
    assert!((product - (-ce).exp()).abs() < 1e-12 * product.max(1e-300) + 1e-15);
}

#[test]
fn shared_tape_matches_separate_tapes() {
    let model = G2GModel::new(tiny(6)).unwrap();
    let graphs = [house(), Graph::path(4), Graph::complete(6)];
    let run = |tape: &mut Tape, bind: &graph2graph::nn::Binding, g: &Graph| {
        let seq = to_sequence(g, 6).unwrap();
        let enc = model.encode(tape, bind, &seq).unwrap();
        model.decode_teacher_forced(tape, bind, &enc, &seq, g.n()).unwrap().values
    };
    let (mut shared, bind) = model.frozen_tape();
    let together: Vec<_> = graphs.iter().map(|g| run(&mut shared, &bind, g)).collect();
    for (g, vals) in graphs.iter().zip(&together) {
        let (mut tape, bind) = model.frozen_tape();
        assert_eq!(&run(&mut tape, &bind, g), vals);
    }
}

#[test]
fn forward_only_encoder_has_fewer_parameters() {
    let ae = ModelConfig::autoencoder(8);
    let mut bi = ae.clone();
    bi.encoder = EncoderMode::Bidirectional;
    let a = G2GModel::new(ae).unwrap();
    let b = G2GModel::new(bi).unwrap();
    assert!(a.params().num_scalars() < b.params().num_scalars());
    assert!(a.params().find("enc_node_rev.w").is_none());
}
