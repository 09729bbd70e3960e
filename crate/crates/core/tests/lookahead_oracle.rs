mod common;

use common::{gaussian, naive_lookahead};
use driftlab::lookahead::standard_target;
use driftlab::{drift, lookahead_target, lookahead_trace, DriftConfig, LookaheadPlan, Stream};

#[test]
fn k2_matches_straight_line_oracle() {
    let mut s = Stream::new(2024);
    let outputs = gaussian(&mut s, 64, 2, 0.0, 1.0);
    let positives = gaussian(&mut s, 64, 2, 1.5, 0.7);
    let cfg = DriftConfig::default();
    for weights in [vec![1.0, 1.0, 1.0], vec![0.5, 2.0, 0.25]] {
        let plan = LookaheadPlan::weighted(weights.clone()).unwrap();
        let t = lookahead_target(&outputs, &positives, &plan, &cfg).unwrap();
        let oracle = naive_lookahead(&outputs, &positives, &weights, 1.0);
        for (i, row) in oracle.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((t.row(i)[c] - v).abs() <= 1e-10, "row {i}: {} vs {v}", t.row(i)[c]);
            }
        }
    }
}

#[test]
fn hand_example_matches_oracle() {
    let out = driftlab::SampleBatch::from_rows(&[[0.0]]).unwrap();
    let pos = driftlab::SampleBatch::from_rows(&[[2.0]]).unwrap();
    let oracle = naive_lookahead(&out, &pos, &[1.0, 1.0], 1.0);
    assert_eq!(oracle, vec![vec![2.0]]);
    let t = lookahead_target(&out, &pos, &LookaheadPlan::uniform(1), &DriftConfig::default()).unwrap();
    assert_eq!(t.row(0), &[2.0]);
}

#[test]
fn invariants_over_seeded_instances() {
    let mut s = Stream::new(99);
    for seed_case in 0..12 {
        let rows = [1, 4, 16, 64][seed_case % 4];
        let dim = [1, 2, 8][seed_case % 3];
        let tau = [0.3, 1.0, 5.0][seed_case % 3];
        let cfg = DriftConfig::with_tau(tau);
        let out = gaussian(&mut s, rows, dim, 0.0, 1.0);
        let pos = gaussian(&mut s, rows + 2, dim, 1.0, 0.5);

        // Reduction: k = 0 is the single-drift target.
        let t0 = lookahead_target(&out, &pos, &LookaheadPlan::uniform(0), &cfg).unwrap();
        let (std_t, _) = standard_target(&out, &pos, &cfg).unwrap();
        assert!(t0.add_scaled(&std_t, -1.0).unwrap().max_abs() <= 1e-12);

        for k in [1, 2, 3] {
            let trace = lookahead_trace(&out, &pos, &LookaheadPlan::uniform(k), &cfg).unwrap();
            // Telescoping with unit weights.
            assert!(trace.target.add_scaled(&trace.final_batch, -1.0).unwrap().max_abs() <= 1e-12);
            // Stage 0 is a direct drift call on the raw outputs.
            assert_eq!(trace.stages[0].negatives, out);
            assert_eq!(trace.stages[0].drift, drift(&out, &pos, &out, &cfg).unwrap());
            // Each stage batch is the previous batch pushed by its drift.
            for i in 1..=k {
                let prev = &trace.stages[i - 1];
                assert_eq!(trace.stages[i].negatives, prev.negatives.add(prev.drift.vectors()).unwrap());
                assert_eq!(trace.stages[i].index, i);
            }
            // Determinism.
            assert_eq!(trace, lookahead_trace(&out, &pos, &LookaheadPlan::uniform(k), &cfg).unwrap());
        }

        // Global fixed point.
        for k in [0, 1, 3] {
            let trace = lookahead_trace(&pos, &pos, &LookaheadPlan::uniform(k), &cfg).unwrap();
            assert!(trace.stages.iter().all(|st| st.drift.vectors().as_slice().iter().all(|v| *v == 0.0)));
            assert_eq!(trace.target, pos);
        }
    }
}
