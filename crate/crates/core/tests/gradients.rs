use ctxtrack::numgrad::gradcheck::{self, primitive_suite};
use ctxtrack::numgrad::nn::lstm_cell;
use ctxtrack::numgrad::{Tape, Tensor};

#[test]
fn every_primitive_matches_central_differences() {
    let report = primitive_suite(10, 2024, 1e-6).unwrap();
    assert!(report.len() >= 29);
    for (name, err) in report {
        assert!(err < 1e-4, "{name}: relative error {err:e}");
    }
}

#[test]
fn lstm_unrolled_five_steps_matches_central_differences() {
    let (input, hidden, batch) = (3, 4, 2);
    let mk = |shape: &[usize], salt: f64| {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|i| ((i as f64 + salt) * 1.37).sin() * 0.6).collect()).unwrap()
    };
    let inputs = vec![
        mk(&[5 * batch, input], 0.1),
        mk(&[input, 4 * hidden], 1.3),
        mk(&[hidden, 4 * hidden], 2.9),
        mk(&[4 * hidden], 4.2),
    ];
    let gc = gradcheck::check(&inputs, 1e-6, |t: &mut Tape, v| {
        let mut h = t.constant(Tensor::zeros(&[batch, hidden]));
        let mut c = t.constant(Tensor::zeros(&[batch, hidden]));
        for step in 0..5 {
            let rows: Vec<usize> = (0..batch).map(|b| step * batch + b).collect();
            let x = t.select_rows(v[0], &rows)?;
            (h, c) = lstm_cell(t, x, h, c, v[1], v[2], v[3])?;
        }
        let s = t.tanh(h);
        Ok(t.sum(s))
    })
    .unwrap();
    assert!(gc.max_rel_error() < 1e-4, "{:?}", gc.rel_errors);
}

#[test]
fn tape_replay_is_deterministic() {
    let run = || {
        let report = primitive_suite(1, 99, 1e-6).unwrap();
        report.into_iter().map(|(_, e)| e.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
