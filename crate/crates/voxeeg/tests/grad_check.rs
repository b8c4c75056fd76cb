//! Analytic gradients against central finite differences, on reduced
//! layer sizes so every single parameter gets checked.

mod common;

use ndarray::{Array1, Array2};
use voxeeg::encoder::{self, CellKind, EncoderGrads, EncoderParams};
use voxeeg::ge2e;

/// Flat index into every trainable parameter.
fn slot(p: &mut EncoderParams, idx: usize) -> &mut f64 {
    let wc = p.w_cell.len();
    let bc = p.b_cell.len();
    let wd = p.w_dense.len();
    if idx < wc {
        &mut p.w_cell.as_slice_mut().unwrap()[idx]
    } else if idx < wc + bc {
        &mut p.b_cell.as_slice_mut().unwrap()[idx - wc]
    } else if idx < wc + bc + wd {
        &mut p.w_dense.as_slice_mut().unwrap()[idx - wc - bc]
    } else {
        &mut p.b_dense.as_slice_mut().unwrap()[idx - wc - bc - wd]
    }
}

fn grad_slot(g: &EncoderGrads, idx: usize) -> f64 {
    let wc = g.w_cell.len();
    let bc = g.b_cell.len();
    let wd = g.w_dense.len();
    if idx < wc {
        g.w_cell.as_slice().unwrap()[idx]
    } else if idx < wc + bc {
        g.b_cell.as_slice().unwrap()[idx - wc]
    } else if idx < wc + bc + wd {
        g.w_dense.as_slice().unwrap()[idx - wc - bc]
    } else {
        g.b_dense.as_slice().unwrap()[idx - wc - bc - wd]
    }
}

#[test]
fn encoder_backward_matches_finite_differences() {
    for (cell, seed) in [(CellKind::Lstm, 1_u64), (CellKind::Gru, 2)] {
        let mut p = encoder::init(cell, 5, 4, 4, seed);
        let frames = common::lcg_frames(6, 5, seed + 100);
        let probe: Array1<f64> = Array1::from_vec(vec![0.7, -0.3, 0.5, 0.9]);

        let cache = encoder::forward(&p, &frames).unwrap();
        let grads = encoder::backward(&p, &cache, probe.view()).unwrap();

        let total = p.num_params();
        for idx in 0..total {
            let orig = *slot(&mut p, idx);
            let fd = common::richardson_diff(
                |v| {
                    *slot(&mut p, idx) = v;
                    let c = encoder::forward(&p, &frames).unwrap();
                    probe.dot(&c.embedding())
                },
                orig,
            );
            *slot(&mut p, idx) = orig;
            let analytic = grad_slot(&grads, idx);
            assert!(
                common::grad_matches(analytic, fd),
                "{} param {idx}: analytic {analytic} vs fd {fd}",
                match cell {
                    CellKind::Lstm => "lstm",
                    CellKind::Gru => "gru",
                }
            );
        }
    }
}

fn chain_loss(p: &EncoderParams, utts: &[Array2<f64>], w: f64, b: f64) -> f64 {
    let es: Vec<Array1<f64>> = utts
        .iter()
        .map(|u| encoder::forward(p, u).unwrap().embedding().to_owned())
        .collect();
    let batch = vec![
        vec![es[0].clone(), es[1].clone()],
        vec![es[2].clone(), es[3].clone()],
    ];
    ge2e::ge2e_softmax_loss(&batch, w, b).unwrap().loss
}

#[test]
fn full_chain_matches_finite_differences() {
    let started = std::time::Instant::now();
    for (cell, seed) in [(CellKind::Lstm, 3_u64), (CellKind::Gru, 4)] {
        let mut p = encoder::init(cell, 5, 4, 4, seed);
        let utts: Vec<Array2<f64>> = (0..4)
            .map(|i| common::lcg_frames(5, 5, seed * 10 + i))
            .collect();
        let (w, b) = (ge2e::W_INIT, ge2e::B_INIT);

        // Analytic route: forward every utterance, one loss, backprop
        // each embedding gradient, accumulate.
        let caches: Vec<_> = utts
            .iter()
            .map(|u| encoder::forward(&p, u).unwrap())
            .collect();
        let batch = vec![
            vec![
                caches[0].embedding().to_owned(),
                caches[1].embedding().to_owned(),
            ],
            vec![
                caches[2].embedding().to_owned(),
                caches[3].embedding().to_owned(),
            ],
        ];
        let out = ge2e::ge2e_softmax_loss(&batch, w, b).unwrap();
        let flat_d: Vec<&Array1<f64>> = out.d_embeddings.iter().flatten().collect();
        let mut grads: Option<EncoderGrads> = None;
        for (cache, d_e) in caches.iter().zip(flat_d) {
            let g = encoder::backward(&p, cache, d_e.view()).unwrap();
            match grads.as_mut() {
                Some(acc) => acc.add_assign(&g),
                None => grads = Some(g),
            }
        }
        let grads = grads.unwrap();

        let total = p.num_params();
        for idx in 0..total {
            let orig = *slot(&mut p, idx);
            let fd = common::richardson_diff(
                |v| {
                    *slot(&mut p, idx) = v;
                    chain_loss(&p, &utts, w, b)
                },
                orig,
            );
            *slot(&mut p, idx) = orig;
            let analytic = grad_slot(&grads, idx);
            assert!(
                common::grad_matches(analytic, fd),
                "param {idx}: analytic {analytic} vs fd {fd}"
            );
        }

        // The similarity scale gets its own finite difference; the
        // offset provably has zero gradient under the softmax loss.
        let fd_w = common::richardson_diff(|v| chain_loss(&p, &utts, v, b), w);
        assert!(
            common::grad_matches(out.d_w, fd_w),
            "d_w {} vs fd {fd_w}",
            out.d_w
        );
        let fd_b = common::richardson_diff(|v| chain_loss(&p, &utts, w, v), b);
        assert!(fd_b.abs() < 1e-9);
        assert!(out.d_b.abs() < 1e-12);
    }
    assert!(
        started.elapsed().as_secs() < 10,
        "gradient checks must stay under ten seconds"
    );
}
