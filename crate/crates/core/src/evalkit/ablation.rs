use super::GridReport;
use crate::policy::Variant;

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    /// Grid means `(AR, EL, SR)`; `None` when the variant is missing.
    pub metrics: Option<(f64, f64, f64)>,
}

/// All five variants in table order.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

/// Collects grid means per variant; variants without a report stay in the
/// table as absent rows.
pub fn ablation_report(entries: &[(Variant, &GridReport)]) -> AblationTable {
    let rows = Variant::ALL
        .iter()
        .map(|&v| AblationRow {
            variant: v,
            metrics: entries
                .iter()
                .find(|(e, _)| *e == v)
                .map(|(_, r)| (r.ar.mean, r.el.mean, r.sr.mean)),
        })
        .collect();
    AblationTable { rows }
}

impl AblationTable {
    pub fn metrics(&self, v: Variant) -> Option<(f64, f64, f64)> {
        self.rows.iter().find(|r| r.variant == v).and_then(|r| r.metrics)
    }

    /// Differences of a row to the full model.
    pub fn delta(&self, v: Variant) -> Option<(f64, f64, f64)> {
        let (a, e, s) = self.metrics(v)?;
        let (fa, fe, fs) = self.metrics(Variant::Full)?;
        Some((a - fa, e - fe, s - fs))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,method,AR,EL,SR,dAR,dEL,dSR\n");
        for r in &self.rows {
            s.push_str(&format!("{},{}", r.variant.flag(), r.variant.label()));
            match (r.metrics, self.delta(r.variant)) {
                (Some((a, e, sr)), d) => {
                    s.push_str(&format!(",{a:.6},{e:.6},{sr:.6}"));
                    match d {
                        Some((da, de, ds)) => s.push_str(&format!(",{da:.6},{de:.6},{ds:.6}\n")),
                        None => s.push_str(",,,\n"),
                    }
                }
                (None, _) => s.push_str(",,,,,,\n"),
            }
        }
        s
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.variant.label().len()).max().unwrap_or(0);
        let mut s = format!("{:<width$}  {:>7}  {:>6}  {:>5}  {:>6}\n", "Method", "AR", "EL", "SR", "ΔSR");
        for r in &self.rows {
            match r.metrics {
                Some((a, e, sr)) => {
                    let ds = self.delta(r.variant).map_or("-".to_string(), |d| format!("{:+.2}", d.2));
                    s.push_str(&format!("{:<width$}  {a:>7.1}  {e:>6.1}  {sr:>5.2}  {ds:>6}\n", r.variant.label()));
                }
                None => s.push_str(&format!("{:<width$}  {:>7}  {:>6}  {:>5}  {:>6}\n", r.variant.label(), "absent", "-", "-", "-")),
            }
        }
        s
    }
}
