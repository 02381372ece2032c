mod common;

use common::checks::closed_form_rows;
use common::{oracle, rng, tensor};
use grucnn::model::*;
use grucnn::tensor::{Tape, Tensor};

fn tiny(arch: Architecture) -> ModelSpec {
    ModelSpec::table1(arch)
        .with_channels(2)
        .with_conv_layers(4)
        .with_lstm_hidden(3)
}

#[test]
fn counts_match_closed_form_at_small_scale() {
    for arch in Architecture::ALL {
        for (c, convs) in [(1, 2), (3, 4), (2, 6)] {
            let spec = ModelSpec::table1(arch)
                .with_channels(c)
                .with_conv_layers(convs)
                .with_lstm_hidden(5);
            let got: Vec<usize> = count_params(&spec)
                .rows
                .iter()
                .map(ParamRow::total)
                .collect();
            assert_eq!(
                got,
                closed_form_rows(arch, c, convs, 5),
                "{arch:?} c={c} convs={convs}"
            );
        }
    }
}

#[test]
fn documented_count_examples() {
    let conv = count_params(&ModelSpec::table1(Architecture::CnnFc));
    assert_eq!(conv.rows[0].total(), 2816);
    let gru = count_params(
        &ModelSpec::table1(Architecture::GruCnnFc)
            .with_channels(1)
            .with_conv_layers(2),
    );
    assert_eq!(gru.rows[0].total(), 21);
    assert_eq!(
        gru.rows.iter().map(ParamRow::total).sum::<usize>(),
        gru.total()
    );
    let text = gru.render();
    assert_eq!(text, count_params(&gru.spec).render());
    assert!(!text.contains("published"));
    assert!(count_params(&ModelSpec::table1(Architecture::CnnLstm))
        .render()
        .contains("published 36.10M"));
}

#[test]
fn reduced_scale_trace_follows_table_rows() {
    for arch in Architecture::ALL {
        let model = Model::init(tiny(arch).with_conv_layers(6), 1).unwrap();
        let (out, trace) = model.predict_traced(&Tensor::zeros([161, 5])).unwrap();
        assert_eq!(out.shape(), &[161, 5]);
        let bins: Vec<usize> = trace.iter().map(|t| t.shape[1]).collect();
        assert_eq!(bins, [161, 161, 81, 81, 81, 41, 41, 41, 161], "{arch:?}");
        assert!(trace[..8]
            .iter()
            .all(|t| t.shape[2] == 5 && t.shape[3] == 2));
        assert_eq!(trace[8].shape, [1, 161, 5, 1]);
    }
}

#[test]
fn outputs_never_depend_on_future_frames() {
    for arch in Architecture::ALL {
        let model = Model::init(tiny(arch), 2).unwrap();
        let x = tensor(&[161, 7], &mut rng(3), 4.0);
        let full = model.predict(&x).unwrap();
        for t in [0usize, 3, 6] {
            let head: Vec<f64> = (0..161)
                .flat_map(|k| (0..=t).map(move |j| (k, j)))
                .map(|(k, j)| x.at(&[k, j]))
                .collect();
            let part = model
                .predict(&Tensor::new([161, t + 1], head).unwrap())
                .unwrap();
            for k in 0..161 {
                for j in 0..=t {
                    assert_eq!(
                        part.at(&[k, j]).to_bits(),
                        full.at(&[k, j]).to_bits(),
                        "{arch:?} t={t}"
                    );
                }
            }
        }
    }
}

/// Two conv rows and the head on 9 bins, recomposed from the loop oracles.
#[test]
fn tiny_cnn_matches_hand_composition() {
    let spec = ModelSpec::table1(Architecture::CnnFc)
        .with_input_bins(9)
        .with_channels(4)
        .with_conv_layers(2);
    let mut model = Model::init(spec, 4).unwrap();
    for (name, t) in model.params_mut().iter_mut() {
        if name.ends_with(".prelu") || name.ends_with(".bias") {
            let mut r = rng(name.len() as u64);
            *t = tensor(t.shape(), &mut r, 0.5);
        }
    }
    let (k, t) = (9, 6);
    let x = tensor(&[k, t], &mut rng(8), 2.0);
    let out = model.predict(&x).unwrap();
    let p = |n: &str| model.params().get(n).unwrap().data().to_vec();
    let prelu = |v: Vec<f64>, a: &[f64]| -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, &y)| if y > 0.0 { y } else { a[i % a.len()] * y })
            .collect()
    };
    let h1 = prelu(
        oracle::conv2d_causal(
            x.data(),
            k,
            t,
            1,
            &p("layer1.kernel"),
            4,
            Some(&p("layer1.bias")),
        ),
        &p("layer1.prelu"),
    );
    let h2 = prelu(
        oracle::conv2d_causal(
            &h1,
            k,
            t,
            4,
            &p("layer2.kernel"),
            4,
            Some(&p("layer2.bias")),
        ),
        &p("layer2.prelu"),
    );
    let (w, b) = (p("layer3.fc.weight"), p("layer3.fc.bias"));
    for j in 0..t {
        for o in 0..k {
            let mut acc = b[o];
            for f in 0..k {
                for c in 0..4 {
                    acc += h2[(f * t + j) * 4 + c] * w[(f * 4 + c) * k + o];
                }
            }
            assert!((out.at(&[o, j]) - acc).abs() < 1e-12);
        }
    }
}

/// Two gruCNN rows unrolled over frames with the scalar cell oracle.
#[test]
fn tiny_grucnn_matches_hand_composition() {
    let spec = ModelSpec::table1(Architecture::GruCnnFc)
        .with_input_bins(9)
        .with_channels(4)
        .with_conv_layers(2);
    let model = Model::init(spec, 5).unwrap();
    let (k, t) = (9, 5);
    let x = tensor(&[k, t], &mut rng(6), 2.0);
    let out = model.predict(&x).unwrap();
    let p = |n: &str| model.params().get(n).unwrap().data().to_vec();
    let layer = |row: usize| {
        let names = [
            "w_zh", "w_zx", "w_rh", "w_rx", "w_hh", "w_hx", "b_z", "b_r", "b_h",
        ];
        names.map(|n| p(&format!("layer{row}.{n}")))
    };
    let (l1, l2) = (layer(1), layer(2));
    fn weights(l: &[Vec<f64>; 9]) -> oracle::GruWeights<'_> {
        oracle::GruWeights {
            wzh: &l[0],
            wzx: &l[1],
            wrh: &l[2],
            wrx: &l[3],
            whh: &l[4],
            whx: &l[5],
            bz: &l[6],
            br: &l[7],
            bh: &l[8],
        }
    }
    let (mut h1, mut h2) = (vec![0.0; k * 4], vec![0.0; k * 4]);
    let (w, b) = (p("layer3.fc.weight"), p("layer3.fc.bias"));
    for j in 0..t {
        let xt: Vec<f64> = (0..k).map(|f| x.at(&[f, j])).collect();
        h1 = oracle::grucnn(&weights(&l1), &h1, &xt, k, 4, 1).h;
        h2 = oracle::grucnn(&weights(&l2), &h2, &h1, k, 4, 4).h;
        for o in 0..k {
            let acc = b[o]
                + h2.iter()
                    .enumerate()
                    .map(|(i, h)| h * w[i * k + o])
                    .sum::<f64>();
            assert!((out.at(&[o, j]) - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn lstm_analytic_cases() {
    let mut tape = Tape::inference();
    let zeros = |s: &[usize]| tape.constant(Tensor::zeros(s));
    let (n, h) = (3, 2);
    let w = [
        zeros(&[n, h]),
        zeros(&[n, h]),
        zeros(&[n, h]),
        zeros(&[n, h]),
    ];
    let u = [
        zeros(&[h, h]),
        zeros(&[h, h]),
        zeros(&[h, h]),
        zeros(&[h, h]),
    ];
    let b0 = [zeros(&[h]), zeros(&[h]), zeros(&[h]), zeros(&[h])];
    let x = tape.constant(Tensor::zeros([1, n]));
    // all-zero network keeps h at zero
    let p = LstmParams {
        w: w.clone(),
        u: u.clone(),
        b: b0.clone(),
    };
    let mut s = LstmState::zeros(&tape, h);
    for _ in 0..4 {
        s = lstm_step(&mut tape, &p, &s, &x).unwrap();
        assert!(s.h.data().iter().all(|v| *v == 0.0));
    }
    // forget bias 1 with nothing written: the cell decays by sigmoid(1) per step
    let mut b = b0;
    b[1] = tape.constant(Tensor::full([h], FORGET_BIAS_INIT));
    let p = LstmParams { w, u, b };
    let mut s = LstmState {
        h: tape.constant(Tensor::zeros([1, h])),
        c: tape.constant(Tensor::full([1, h], 0.7)),
    };
    let decay = 1.0 / (1.0 + (-1.0f64).exp());
    let mut c = 0.7;
    for _ in 0..3 {
        s = lstm_step(&mut tape, &p, &s, &x).unwrap();
        c *= decay;
        assert!(s.c.data().iter().all(|v| (v - c).abs() < 1e-15));
    }
}

#[test]
fn checkpoint_reload_reproduces_forward_bits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ck");
    for arch in Architecture::ALL {
        let model = Model::init(tiny(arch), 9).unwrap();
        Checkpoint::from_model(&model).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap().model().unwrap();
        let x = tensor(&[161, 4], &mut rng(1), 3.0);
        let (a, b) = (model.predict(&x).unwrap(), back.predict(&x).unwrap());
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn init_is_seeded_and_follows_init_rules() {
    let a = Model::init(tiny(Architecture::CnnLstm), 3).unwrap();
    let b = Model::init(tiny(Architecture::CnnLstm), 3).unwrap();
    assert_eq!(a.params(), b.params());
    let get = |n: &str| a.params().get(n).unwrap().data().to_vec();
    assert!(get("layer1.prelu").iter().all(|v| *v == PRELU_INIT));
    assert!(get("layer1.bias").iter().all(|v| *v == 0.0));
    let head = tiny(Architecture::CnnLstm).layers().len();
    assert!(get(&format!("layer{head}.lstm.b_f"))
        .iter()
        .all(|v| *v == 1.0));
}
