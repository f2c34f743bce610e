use crate::context::consistency_loss;
use crate::evalkit::{mr_from_boxes, run_grid, BoundingBox, ConstantController, GridSpec};
use crate::numgrad::{gradcheck, Tape, Tensor};
use crate::policy::conservative_term;
use crate::tracksim::{reward, ActionCommand, TargetMotion};

#[derive(Clone, Debug, PartialEq)]
pub struct SelftestItem {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn item(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> SelftestItem {
    SelftestItem {
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Fast internal consistency checks: finite-difference gradients of every
/// primitive, the reward and box-stability formulas, the consistency and
/// conservative terms, and a trivially solvable episode.
pub fn run_selftest() -> Vec<SelftestItem> {
    let mut out = Vec::new();
    match gradcheck::primitive_suite(2, 7, 1e-6) {
        Ok(results) => out.extend(
            results
                .into_iter()
                .map(|(name, err)| item(format!("gradient {name}"), err < 1e-4, format!("rel err {err:.2e}"))),
        ),
        Err(e) => out.push(item("gradient suite", false, e.to_string())),
    }

    let pi = std::f64::consts::PI;
    for (rho, theta, want) in [(2.5, 0.0, 1.0), (5.0, pi / 8.0, 1.0 / 6.0), (10.0, 0.0, 0.0)] {
        let got = reward(rho, theta);
        out.push(item(format!("reward({rho}, {theta:.4})"), near(got, want), format!("{got:.12}")));
    }

    let init = BoundingBox { cx: 0.5, cy: 0.5, w: 0.2, h: 0.3 };
    let same = mr_from_boxes(&[Some(init); 5]);
    out.push(item("MR of a constant box", matches!(same, Ok(v) if near(v, 1.0)), format!("{same:?}")));
    let shifted = mr_from_boxes(&[Some(init), Some(BoundingBox { cx: 0.8, ..init })]);
    let want = (1.0 + 1.0 / 1.3) / 2.0;
    out.push(item("MR with a 0.3 center shift", matches!(shifted, Ok(v) if near(v, want)), format!("{shifted:?}")));

    let cons = |z: Vec<f64>, c: Vec<f64>| -> Option<f64> {
        let mut t = Tape::new();
        let z = t.constant(Tensor::new(vec![1, z.len()], z).ok()?);
        let c = t.constant(Tensor::new(vec![1, c.len()], c).ok()?);
        let l = consistency_loss(&mut t, z, c, &[0]).ok()?;
        Some(t.value(l).item())
    };
    let same = cons(vec![0.3, -1.2, 2.0], vec![0.3, -1.2, 2.0]);
    out.push(item("consistency of identical contexts", same.is_some_and(|v| v.abs() < 1e-9), format!("{same:?}")));
    let orth = cons(vec![1.0, 0.0], vec![0.0, 2.0]);
    out.push(item("consistency of orthogonal contexts", orth.is_some_and(|v| near(v, 1.0)), format!("{orth:?}")));

    let mut t = Tape::new();
    let q = t.constant(Tensor::full(&[2, 10], 1.5));
    let push = t.constant(Tensor::full(&[2], 1.5));
    let c = conservative_term(&mut t, q, None, push).map(|v| t.value(v).item());
    out.push(item(
        "conservative term of constant Q",
        matches!(c, Ok(v) if near(v, 10f64.ln())),
        format!("{c:?}"),
    ));

    let spec = GridSpec {
        heights: vec![1.0],
        speeds: vec![0.0],
        episodes_per_cell: 3,
        motion: TargetMotion::Stationary,
        obstacle_count: 0,
        ..GridSpec::default()
    };
    let r = run_grid(&spec, || ConstantController(ActionCommand::new(0.0, 0.0)));
    let ok = matches!(&r, Ok(r) if r.ar.mean == 500.0 && r.sr.mean == 1.0);
    out.push(item(
        "zero action on a stationary target",
        ok,
        r.map_or_else(|e| e.to_string(), |r| format!("AR {} SR {}", r.ar.mean, r.sr.mean)),
    ));
    out
}
