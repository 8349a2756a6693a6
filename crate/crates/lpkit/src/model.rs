use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for RowSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        })
    }
}

/// `min c·x + offset` subject to sparse rows and variable bounds.
///
/// Entries are `(row, col, value)` triplets; duplicates are summed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
    pub entries: Vec<(usize, usize, f64)>,
    pub senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    pub var_names: Vec<String>,
    pub row_names: Vec<String>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_integer(&self) -> usize {
        self.integer.iter().filter(|&&b| b).count()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.integer.push(false);
        self.var_names.push(String::new());
        self.objective.len() - 1
    }

    pub fn add_int_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        let j = self.add_var(cost, lower, upper);
        self.integer[j] = true;
        j
    }

    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: RowSense, rhs: f64) -> usize {
        let r = self.rhs.len();
        for &(j, v) in coeffs {
            if v != 0.0 {
                self.entries.push((r, j, v));
            }
        }
        self.senses.push(sense);
        self.rhs.push(rhs);
        self.row_names.push(String::new());
        r
    }

    pub fn set_var_name(&mut self, j: usize, name: impl Into<String>) {
        self.var_names[j] = name.into();
    }

    pub fn set_row_name(&mut self, r: usize, name: impl Into<String>) {
        self.row_names[r] = name.into();
    }

    pub fn var_name(&self, j: usize) -> String {
        match self.var_names.get(j) {
            Some(s) if !s.is_empty() => s.clone(),
            _ => format!("x{j}"),
        }
    }

    pub fn row_name(&self, r: usize) -> String {
        match self.row_names.get(r) {
            Some(s) if !s.is_empty() => s.clone(),
            _ => format!("r{r}"),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.num_vars();
        let m = self.num_rows();
        if self.lower.len() != n || self.upper.len() != n || self.integer.len() != n {
            return Err("bound or integrality vectors do not match the variable count".into());
        }
        if self.senses.len() != m {
            return Err("row senses do not match the row count".into());
        }
        for (k, &(r, j, v)) in self.entries.iter().enumerate() {
            if r >= m || j >= n {
                return Err(format!("entry {k} at ({r}, {j}) is out of range"));
            }
            if !v.is_finite() {
                return Err(format!("entry {k} is not finite"));
            }
        }
        for j in 0..n {
            if !self.objective[j].is_finite() {
                return Err(format!("objective coefficient of {} is not finite", self.var_name(j)));
            }
            if self.lower[j] > self.upper[j] || self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(format!("variable {} has empty bounds", self.var_name(j)));
            }
        }
        if let Some(r) = self.rhs.iter().position(|v| !v.is_finite()) {
            return Err(format!("right-hand side of {} is not finite", self.row_name(r)));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn row_activities(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_rows()];
        for &(r, j, v) in &self.entries {
            act[r] += v * x[j];
        }
        act
    }

    /// Largest violation of any row or bound by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for (r, a) in self.row_activities(x).into_iter().enumerate() {
            let b = self.rhs[r];
            let viol = match self.senses[r] {
                RowSense::Le => a - b,
                RowSense::Ge => b - a,
                RowSense::Eq => (a - b).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn max_fractionality(&self, x: &[f64]) -> f64 {
        (0..self.num_vars())
            .filter(|&j| self.integer[j])
            .map(|j| (x[j] - x[j].round()).abs())
            .fold(0.0, f64::max)
    }
}
