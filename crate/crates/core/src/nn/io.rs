//! Plain-text parameter dumps.
//!
//! A tensor block is a header line followed by the values, eight per line:
//!
//! ```text
//! tensor <name> mlp <n_0> <n_1> ... <n_L>
//! tensor <name> vec <len>
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a dump parses
//! back to bit-identical parameters.

use std::fmt::Write as _;

use super::Mlp;

const PER_LINE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Mlp(Mlp),
    Vec(Vec<f64>),
}

pub fn write_values(out: &mut String, values: &[f64]) {
    for chunk in values.chunks(PER_LINE) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

pub fn write_mlp(out: &mut String, name: &str, net: &Mlp) {
    let sizes: Vec<String> = net.sizes().iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "tensor {name} mlp {}", sizes.join(" "));
    write_values(out, net.params());
}

pub fn write_vec(out: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(out, "tensor {name} vec {}", values.len());
    write_values(out, values);
}

/// Line-oriented reader over a dump.
pub struct Reader<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Reader<'a> {
    pub fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate().peekable() }
    }

    /// Next non-empty line with its 1-based number.
    pub fn next_line(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.lines.by_ref() {
            if !l.trim().is_empty() {
                return Some((i + 1, l.trim()));
            }
        }
        None
    }

    /// Reads a `key value` line and returns the value.
    pub fn field(&mut self, key: &str) -> Result<&'a str, String> {
        let (n, line) = self.next_line().ok_or_else(|| format!("missing `{key}` line"))?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ if line == key => Ok(""),
            _ => Err(format!("line {n}: expected `{key}`, found `{line}`")),
        }
    }

    fn values(&mut self, count: usize) -> Result<Vec<f64>, String> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let (n, line) = self.next_line().ok_or("truncated tensor values")?;
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| format!("line {n}: bad number `{tok}`"))?;
                out.push(v);
            }
        }
        if out.len() != count {
            return Err(format!("expected {count} values, found {}", out.len()));
        }
        Ok(out)
    }

    /// Reads one tensor block whose name must equal `name`.
    pub fn tensor(&mut self, name: &str) -> Result<Tensor, String> {
        let (n, header) = self.next_line().ok_or_else(|| format!("missing tensor `{name}`"))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() < 4 || toks[0] != "tensor" || toks[1] != name {
            return Err(format!("line {n}: expected tensor `{name}`, found `{header}`"));
        }
        let nums: Vec<usize> = toks[3..]
            .iter()
            .map(|t| t.parse().map_err(|_| format!("line {n}: bad size `{t}`")))
            .collect::<Result<_, _>>()?;
        match toks[2] {
            "vec" if nums.len() == 1 => Ok(Tensor::Vec(self.values(nums[0])?)),
            "mlp" if nums.len() >= 2 && nums.iter().all(|&s| s > 0) => {
                let count = Mlp::zeros(&nums).num_params();
                let params = self.values(count)?;
                Mlp::from_parts(&nums, params).map(Tensor::Mlp).map_err(|e| e.to_string())
            }
            kind => Err(format!("line {n}: bad tensor kind `{kind}`")),
        }
    }

    pub fn mlp(&mut self, name: &str) -> Result<Mlp, String> {
        match self.tensor(name)? {
            Tensor::Mlp(m) => Ok(m),
            Tensor::Vec(_) => Err(format!("tensor `{name}` should be an mlp")),
        }
    }

    pub fn vec(&mut self, name: &str) -> Result<Vec<f64>, String> {
        match self.tensor(name)? {
            Tensor::Vec(v) => Ok(v),
            Tensor::Mlp(_) => Err(format!("tensor `{name}` should be a vector")),
        }
    }
}
