use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Multiply,
    SumOut,
    CountConvert,
    Absorb,
    Split,
    GroundFallback,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OpKind::Multiply => "multiply",
            OpKind::SumOut => "sum-out",
            OpKind::CountConvert => "count-convert",
            OpKind::Absorb => "absorb",
            OpKind::Split => "split",
            OpKind::GroundFallback => "ground-fallback",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EliminationStep {
    pub op: OpKind,
    pub operand: String,
    /// Table size of the factor the step produced.
    pub size: usize,
}

/// Ordered record of every lifted operator applied, with running counters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OperatorLog {
    pub steps: Vec<EliminationStep>,
    pub multiplications: usize,
    pub sum_outs: usize,
    pub count_conversions: usize,
    pub absorptions: usize,
    pub splits: usize,
    pub groundings: usize,
    pub max_factor_size: usize,
    /// Potential-table cells written, the machine-independent cost unit.
    pub cell_writes: u64,
    /// Messages computed (intra-tree plus temporal).
    pub messages: usize,
}

impl OperatorLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, op: OpKind, operand: impl Into<String>, size: usize) {
        match op {
            OpKind::Multiply => self.multiplications += 1,
            OpKind::SumOut => self.sum_outs += 1,
            OpKind::CountConvert => self.count_conversions += 1,
            OpKind::Absorb => self.absorptions += 1,
            OpKind::Split => self.splits += 1,
            OpKind::GroundFallback => self.groundings += 1,
        }
        self.max_factor_size = self.max_factor_size.max(size);
        self.cell_writes += size as u64;
        self.steps.push(EliminationStep { op, operand: operand.into(), size });
    }

    pub fn has_ground_fallback(&self) -> bool {
        self.groundings > 0
    }

    pub fn merge(&mut self, other: &OperatorLog) {
        for s in &other.steps {
            self.record(s.op, s.operand.clone(), s.size);
        }
        self.messages += other.messages;
    }

    /// Counters recomputed from the step list agree with the running ones.
    pub fn is_consistent(&self) -> bool {
        let count = |k: OpKind| self.steps.iter().filter(|s| s.op == k).count();
        count(OpKind::Multiply) == self.multiplications
            && count(OpKind::SumOut) == self.sum_outs
            && count(OpKind::CountConvert) == self.count_conversions
            && count(OpKind::Absorb) == self.absorptions
            && count(OpKind::Split) == self.splits
            && count(OpKind::GroundFallback) == self.groundings
            && self.steps.iter().map(|s| s.size).max().unwrap_or(0) == self.max_factor_size
    }

    /// `step,op,operand,size` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,op,operand,size\n");
        for (i, s) in self.steps.iter().enumerate() {
            let operand = if s.operand.contains([',', '"']) {
                format!("\"{}\"", s.operand.replace('"', "\"\""))
            } else {
                s.operand.clone()
            };
            out.push_str(&format!("{},{},{},{}\n", i, s.op, operand, s.size));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_follow_steps() {
        let mut log = OperatorLog::new();
        log.record(OpKind::Multiply, "g0 * g1", 16);
        log.record(OpKind::SumOut, "Att(J)", 8);
        log.record(OpKind::GroundFallback, "gP", 64);
        assert!(log.is_consistent());
        assert_eq!(log.max_factor_size, 64);
        assert_eq!(log.cell_writes, 88);
        let csv = log.to_csv();
        assert!(csv.starts_with("step,op,operand,size\n0,multiply,g0 * g1,16"));
        assert!(csv.contains("1,sum-out,Att(J),8"));
    }
}
