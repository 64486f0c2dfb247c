use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row per training iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub env_steps: u64,
    /// Mean of `αᵀG` over episodes finished this iteration (discounted),
    /// carried forward when none finished, and 0 before the first one.
    pub mean_scalarized_return: f64,
    /// Mean policy entropy seen by the updates.
    pub entropy: f64,
    pub lambda: f64,
    pub beta_c: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
    #[serde(with = "bool_as_int")]
    pub discarded: bool,
}

mod bool_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            x => Err(serde::de::Error::custom(format!("discarded must be 0 or 1, got {x}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn discards(&self) -> usize {
        self.rows.iter().filter(|r| r.discarded).count()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        if self.rows.is_empty() {
            out.write_record([
                "iteration",
                "env_steps",
                "mean_scalarized_return",
                "entropy",
                "lambda",
                "beta_c",
                "actor_grad_norm",
                "critic_grad_norm",
                "discarded",
            ])
            .map_err(|e| Error::Csv(e.to_string()))?;
        }
        for r in &self.rows {
            out.serialize(r).map_err(|e| Error::Csv(e.to_string()))?;
        }
        out.flush().map_err(|e| Error::io("metrics log", e))
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd
            .deserialize()
            .collect::<std::result::Result<Vec<MetricsRow>, _>>()
            .map_err(|e| Error::Csv(e.to_string()))?;
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: u64, d: bool) -> MetricsRow {
        MetricsRow {
            iteration: i,
            env_steps: 256 * (i + 1),
            mean_scalarized_return: -1.5,
            entropy: 1.2,
            lambda: 0.01,
            beta_c: 1.0,
            actor_grad_norm: 0.25,
            critic_grad_norm: 3.0,
            discarded: d,
        }
    }

    #[test]
    fn csv_round_trip() {
        let log = MetricsLog {
            rows: vec![row(0, false), row(1, true)],
        };
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "iteration,env_steps,mean_scalarized_return,entropy,lambda,beta_c,actor_grad_norm,critic_grad_norm,discarded\n"
        ));
        assert!(text.lines().nth(2).unwrap().ends_with(",1"));
        assert_eq!(MetricsLog::read_csv(&buf[..]).unwrap(), log);
    }

    #[test]
    fn empty_log_has_header() {
        let mut buf = Vec::new();
        MetricsLog::default().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
        let mut buf = Vec::new();
        MetricsLog::default().write_csv(&mut buf).unwrap();
        assert!(MetricsLog::read_csv(&buf[..]).unwrap().is_empty());
    }
}
