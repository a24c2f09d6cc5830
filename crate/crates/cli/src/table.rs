//! Sweep results and their CSV form.

use crate::config::Unit;

/// Per-cell annotation carried into the `flags` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    NonConverged,
    Infeasible,
    /// Bound is infinite or otherwise carries no information.
    Vacuous,
    /// Oracle skipped because the instance exceeds its size cap.
    Capped,
    /// Smaller of a compared pair.
    Smaller,
}

impl Flag {
    pub fn name(self) -> &'static str {
        match self {
            Flag::NonConverged => "nonconverged",
            Flag::Infeasible => "infeasible",
            Flag::Vacuous => "vacuous",
            Flag::Capped => "capped",
            Flag::Smaller => "smaller",
        }
    }

    /// Whether the plotted series should break at this cell.
    pub fn breaks_series(self) -> bool {
        matches!(self, Flag::Infeasible | Flag::Vacuous | Flag::Capped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub value: f64,
    pub flag: Option<Flag>,
}

impl Cell {
    pub fn value(value: f64) -> Self {
        let flag = if value.is_finite() { None } else { Some(Flag::Vacuous) };
        Self { value, flag }
    }

    pub fn flagged(value: f64, flag: Flag) -> Self {
        Self { value, flag: Some(flag) }
    }

    /// Drawn in a plot: finite and not flagged as a gap.
    pub fn plottable(&self) -> bool {
        self.value.is_finite() && !self.flag.is_some_and(Flag::breaks_series)
    }
}

/// One column per bound, one row per grid point; `x` is in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// `r` or `gamma`.
    pub x_name: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub columns: Vec<String>,
    /// `cells[row][column]`.
    pub cells: Vec<Vec<Cell>>,
}

impl SweepResult {
    pub fn new(x_name: &str, y_label: &str, x: Vec<f64>) -> Self {
        Self {
            x_name: x_name.into(),
            y_label: y_label.into(),
            cells: vec![Vec::new(); x.len()],
            x,
            columns: Vec::new(),
        }
    }

    pub fn push_column(&mut self, name: impl Into<String>, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.x.len(), "column length must match the grid");
        self.columns.push(name.into());
        for (row, cell) in self.cells.iter_mut().zip(cells) {
            row.push(cell);
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.cells.iter().map(|row| row[k].value).collect())
    }

    pub fn count_flag(&self, flag: Flag) -> usize {
        self.cells.iter().flatten().filter(|c| c.flag == Some(flag)).count()
    }

    pub fn x_header(&self, unit: Unit) -> String {
        format!("{}_{}", self.x_name, unit.name())
    }

    pub fn to_csv(&self, unit: Unit, config_hash: &str) -> String {
        let mut out = self.x_header(unit);
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",flags,config_hash\n");
        for (x, row) in self.x.iter().zip(&self.cells) {
            out.push_str(&fmt_sig(x * unit.scale()));
            for cell in row {
                out.push(',');
                out.push_str(&fmt_sig(cell.value));
            }
            let flags: Vec<String> = self
                .columns
                .iter()
                .zip(row)
                .filter_map(|(c, cell)| cell.flag.map(|f| format!("{c}:{}", f.name())))
                .collect();
            out.push(',');
            out.push_str(&flags.join(";"));
            out.push(',');
            out.push_str(config_hash);
            out.push('\n');
        }
        out
    }
}

pub const SIGNIFICANT_DIGITS: i32 = 12;

/// Plain decimal with 12 significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // round through scientific notation first so the exponent accounts for carries
    let sci = format!("{:.*e}", (SIGNIFICANT_DIGITS - 1) as usize, x);
    let exp: i32 = sci.split('e').nth(1).and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (SIGNIFICANT_DIGITS - 1 - exp).max(0) as usize;
    let rounded: f64 = sci.parse().unwrap_or(x);
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.25), "0.25");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(-2.0 / 3.0 * 1e-5), "-0.00000666666666667");
        assert_eq!(fmt_sig(123456.7890123456), "123456.789012");
        assert_eq!(fmt_sig(9.9999999999999), "10");
        assert_eq!(fmt_sig(f64::INFINITY), "inf");
        assert_eq!(fmt_sig(-0.0), "0");
    }

    #[test]
    fn csv_layout() {
        let mut r = SweepResult::new("r", "y", vec![0.0, std::f64::consts::LN_2]);
        r.push_column("a", vec![Cell::value(1.0), Cell::value(f64::INFINITY)]);
        r.push_column("b", vec![Cell::flagged(0.5, Flag::NonConverged), Cell::value(2.0)]);
        let csv = r.to_csv(Unit::Bits, "abc");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "r_bits,a,b,flags,config_hash");
        assert_eq!(lines[1], "0,1,0.5,b:nonconverged,abc");
        assert_eq!(lines[2], "1,inf,2,a:vacuous,abc");
    }
}
