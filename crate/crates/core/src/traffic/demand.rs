use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrafficError;

fn default_groups() -> usize {
    8
}

/// Training-communication workload that produces one demand matrix per epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WorkloadSpec {
    /// Ring all-reduce: group `i` sends `payload_gbps` to group `i+1 mod n`.
    RingAllReduce {
        payload_gbps: f64,
        #[serde(default = "default_groups")]
        groups: usize,
    },
    /// Independent uniform demands in `[0, max_gbps)` between every ordered pair.
    UniformRandom {
        max_gbps: f64,
        #[serde(default = "default_groups")]
        groups: usize,
    },
}

impl WorkloadSpec {
    pub fn groups(&self) -> usize {
        match self {
            WorkloadSpec::RingAllReduce { groups, .. }
            | WorkloadSpec::UniformRandom { groups, .. } => *groups,
        }
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, TrafficError> {
        serde_json::from_value(value.clone()).map_err(|e| TrafficError::Config(e.to_string()))
    }
}

/// Per-epoch traffic between groups (or metro nodes), in Gbps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandMatrix {
    pub epoch: u64,
    pub entries: Vec<Vec<f64>>,
}

impl DemandMatrix {
    pub fn zeros(epoch: u64, n: usize) -> Self {
        DemandMatrix {
            epoch,
            entries: vec![vec![0.0; n]; n],
        }
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn total_gbps(&self) -> f64 {
        self.entries.iter().flatten().sum()
    }

    /// Nonzero off-diagonal entries in row-major order.
    pub fn demands(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(move |&(j, &g)| i != j && g > 0.0)
                .map(move |(j, &g)| (i, j, g))
        })
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        let n = self.size();
        for (i, row) in self.entries.iter().enumerate() {
            if row.len() != n {
                return Err(TrafficError::Format(format!(
                    "row {i} has {} columns, expected {n}",
                    row.len()
                )));
            }
            for (j, &g) in row.iter().enumerate() {
                if !(g.is_finite() && g >= 0.0) {
                    return Err(TrafficError::Format(format!(
                        "entry ({i},{j}) must be a non-negative number"
                    )));
                }
                if i == j && g != 0.0 {
                    return Err(TrafficError::Format(format!(
                        "diagonal entry ({i},{i}) must be zero"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Tabular text: a header row `epoch=<e>,g0,g1,...` followed by one row
    /// per source group.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TrafficError> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.size();
        let mut header = vec![format!("epoch={}", self.epoch)];
        header.extend((0..n).map(|j| format!("g{j}")));
        w.write_record(&header)
            .map_err(|e| TrafficError::Format(e.to_string()))?;
        for (i, row) in self.entries.iter().enumerate() {
            let mut rec = vec![format!("g{i}")];
            rec.extend(row.iter().map(|g| g.to_string()));
            w.write_record(&rec)
                .map_err(|e| TrafficError::Format(e.to_string()))?;
        }
        w.flush().map_err(|e| TrafficError::Format(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, TrafficError> {
        let fmt = |e: csv::Error| TrafficError::Format(e.to_string());
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(input);
        let mut records = r.records();
        let header = records
            .next()
            .ok_or_else(|| TrafficError::Format("empty input".into()))?
            .map_err(fmt)?;
        let epoch = header
            .get(0)
            .and_then(|h| h.strip_prefix("epoch="))
            .and_then(|e| e.parse().ok())
            .ok_or_else(|| TrafficError::Format("header must start with epoch=<n>".into()))?;
        let n = header.len() - 1;
        let mut entries = Vec::with_capacity(n);
        for (i, rec) in records.enumerate() {
            let rec = rec.map_err(fmt)?;
            if rec.get(0) != Some(format!("g{i}").as_str()) {
                return Err(TrafficError::Format(format!(
                    "row {i} must be labelled g{i}"
                )));
            }
            let row = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| TrafficError::Format(format!("row {i}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            entries.push(row);
        }
        let m = DemandMatrix { epoch, entries };
        if m.size() != n {
            return Err(TrafficError::Format(format!(
                "expected {n} rows, found {}",
                m.size()
            )));
        }
        m.validate()?;
        Ok(m)
    }
}

/// Pure function of `(workload, epoch, seed)`.
pub fn generate_demands(
    workload: &WorkloadSpec,
    epoch: u64,
    seed: u64,
) -> Result<DemandMatrix, TrafficError> {
    let n = workload.groups();
    if n < 2 {
        return Err(TrafficError::Config(
            "a workload needs at least two groups".into(),
        ));
    }
    let mut m = DemandMatrix::zeros(epoch, n);
    match *workload {
        WorkloadSpec::RingAllReduce { payload_gbps, .. } => {
            if !(payload_gbps.is_finite() && payload_gbps >= 0.0) {
                return Err(TrafficError::Config(
                    "payload_gbps must be non-negative".into(),
                ));
            }
            for i in 0..n {
                m.entries[i][(i + 1) % n] = payload_gbps;
            }
        }
        WorkloadSpec::UniformRandom { max_gbps, .. } => {
            if !(max_gbps.is_finite() && max_gbps >= 0.0) {
                return Err(TrafficError::Config("max_gbps must be non-negative".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(epoch);
            for i in 0..n {
                for j in 0..n {
                    if i != j && max_gbps > 0.0 {
                        m.entries[i][j] = rng.random_range(0.0..max_gbps);
                    }
                }
            }
        }
    }
    Ok(m)
}
