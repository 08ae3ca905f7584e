use std::hash::{Hash, Hasher};
use std::io::{Read, Write};

use crate::numkernel::Matrix;
use crate::topology::Vertex;
use crate::{Error, Result};

/// Rows `start..start + len` of a stacked data matrix belong to vertex `id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowBlock {
    pub id: String,
    pub start: usize,
    pub len: usize,
}

impl RowBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }

    /// Consecutive blocks for the vertices in declaration order.
    pub fn layout(vertices: &[Vertex]) -> Vec<RowBlock> {
        let mut start = 0;
        vertices
            .iter()
            .map(|v| {
                let b = RowBlock {
                    id: v.id.clone(),
                    start,
                    len: v.dim,
                };
                start += v.dim;
                b
            })
            .collect()
    }
}

/// Aligned snapshot triples: column `k` of `y` is the successor of column
/// `k` of `z` under input column `k` of `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    pub z: Matrix,
    pub y: Matrix,
    pub gamma: Matrix,
    pub state_rows: Vec<RowBlock>,
    pub input_rows: Vec<RowBlock>,
}

const Y_FINAL: &str = "y_final";
const INPUT_PREFIX: &str = "u:";

fn check_layout(blocks: &[RowBlock], rows: usize, what: &str) -> Result<()> {
    let mut next = 0;
    for b in blocks {
        if b.start != next || b.len == 0 {
            return Err(Error::RowRangeMismatch(format!(
                "{what} block `{}` does not continue at row {next}",
                b.id
            )));
        }
        next += b.len;
    }
    if next != rows {
        return Err(Error::RowRangeMismatch(format!(
            "{what} blocks cover {next} rows of {rows}"
        )));
    }
    Ok(())
}

impl TrajectoryData {
    pub fn new(
        z: Matrix,
        y: Matrix,
        gamma: Matrix,
        state_rows: Vec<RowBlock>,
        input_rows: Vec<RowBlock>,
    ) -> Result<Self> {
        let m = z.ncols();
        if m == 0 || y.ncols() != m || gamma.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "snapshot counts z={m}, y={}, gamma={} must agree and be >= 1",
                y.ncols(),
                gamma.ncols()
            )));
        }
        if y.nrows() != z.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "z has {} rows but y has {}",
                z.nrows(),
                y.nrows()
            )));
        }
        check_layout(&state_rows, z.nrows(), "state")?;
        check_layout(&input_rows, gamma.nrows(), "input")?;
        for mat in [&z, &y, &gamma] {
            crate::numkernel::check_finite(mat)?;
        }
        Ok(TrajectoryData {
            z,
            y,
            gamma,
            state_rows,
            input_rows,
        })
    }

    /// Number of snapshot triples `m`.
    pub fn len(&self) -> usize {
        self.z.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_block(&self, id: &str) -> Option<&RowBlock> {
        self.state_rows.iter().find(|b| b.id == id)
    }

    pub fn input_block(&self, id: &str) -> Option<&RowBlock> {
        self.input_rows.iter().find(|b| b.id == id)
    }

    /// Hash of the exact bit patterns of all three matrices.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for mat in [&self.z, &self.y, &self.gamma] {
            mat.shape().hash(&mut h);
            for x in mat.iter() {
                x.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Writes the trajectory as CSV.
    ///
    /// Header: `k`, one `<vertex>:<component>` column per state row, one
    /// `u:<vertex>:<component>` column per input row. Rows `k = 1..=m` hold
    /// the columns of `z` and `gamma`; a final row keyed `y_final` holds the
    /// last successor. The earlier successors are the shifted states, so
    /// the format assumes `z[:, k+1] == y[:, k]`, which holds for any
    /// simulated trajectory.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        for b in &self.state_rows {
            header.extend((0..b.len).map(|c| format!("{}:{c}", b.id)));
        }
        for b in &self.input_rows {
            header.extend((0..b.len).map(|c| format!("{INPUT_PREFIX}{}:{c}", b.id)));
        }
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut rec = vec![(k + 1).to_string()];
            rec.extend(self.z.column(k).iter().map(|x| x.to_string()));
            rec.extend(self.gamma.column(k).iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        let mut last = vec![Y_FINAL.to_string()];
        last.extend(self.y.column(self.len() - 1).iter().map(|x| x.to_string()));
        last.extend(std::iter::repeat_n(String::new(), self.gamma.nrows()));
        w.write_record(&last)?;
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("k") {
            return Err(Error::Parse(
                "trajectory CSV must start with a `k` column".into(),
            ));
        }
        let mut state_rows: Vec<RowBlock> = Vec::new();
        let mut input_rows: Vec<RowBlock> = Vec::new();
        let mut n = 0;
        for name in header.iter().skip(1) {
            let (blocks, name) = match name.strip_prefix(INPUT_PREFIX) {
                Some(rest) => (&mut input_rows, rest),
                None => {
                    if !input_rows.is_empty() {
                        return Err(Error::Parse(format!(
                            "state column `{name}` after input columns"
                        )));
                    }
                    n += 1;
                    (&mut state_rows, name)
                }
            };
            let (id, comp) = name.rsplit_once(':').ok_or_else(|| {
                Error::Parse(format!("column `{name}` is not `<vertex>:<component>`"))
            })?;
            let comp: usize = comp
                .parse()
                .map_err(|_| Error::Parse(format!("bad component index in `{name}`")))?;
            match blocks.last_mut() {
                Some(b) if b.id == id && comp == b.len => b.len += 1,
                _ if comp == 0 => {
                    let start = blocks.last().map_or(0, |b| b.start + b.len);
                    blocks.push(RowBlock {
                        id: id.to_string(),
                        start,
                        len: 1,
                    });
                }
                _ => {
                    return Err(Error::Parse(format!(
                        "component columns of `{id}` out of order"
                    )))
                }
            }
        }
        let l = header.len() - 1 - n;

        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("`{s}` is not a number")))
        };
        let mut zcols: Vec<Vec<f64>> = Vec::new();
        let mut gcols: Vec<Vec<f64>> = Vec::new();
        let mut y_final: Option<Vec<f64>> = None;
        for rec in r.records() {
            let rec = rec?;
            if y_final.is_some() {
                return Err(Error::Parse("rows after `y_final`".into()));
            }
            let key = rec.get(0).unwrap_or_default();
            let states = (1..=n)
                .map(|i| parse(&rec[i]))
                .collect::<Result<Vec<_>>>()?;
            if key == Y_FINAL {
                y_final = Some(states);
                continue;
            }
            let k: usize = key
                .parse()
                .map_err(|_| Error::Parse(format!("bad time index `{key}`")))?;
            if k != zcols.len() + 1 {
                return Err(Error::Parse(format!("time index {k} out of sequence")));
            }
            zcols.push(states);
            gcols.push(
                (n + 1..=n + l)
                    .map(|i| parse(&rec[i]))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        let y_final = y_final.ok_or_else(|| Error::Parse("missing `y_final` row".into()))?;
        let m = zcols.len();
        if m == 0 {
            return Err(Error::Parse("trajectory has no snapshot rows".into()));
        }
        let z = Matrix::from_fn(n, m, |i, k| zcols[k][i]);
        let gamma = Matrix::from_fn(l, m, |i, k| gcols[k][i]);
        let y = Matrix::from_fn(n, m, |i, k| {
            if k + 1 < m {
                zcols[k + 1][i]
            } else {
                y_final[i]
            }
        });
        TrajectoryData::new(z, y, gamma, state_rows, input_rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::tests::{two_node_inputs, two_node_system};
    use crate::sysmodel::Vector;

    #[test]
    fn csv_layout_and_round_trip() {
        let traj = two_node_system()
            .simulate(&Vector::from_vec(vec![2.0, 5.0]), &two_node_inputs())
            .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,v1:0,v2:0,u:e1:0,u:e2:0");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("1,2,5,0.2,0.3"));
        assert!(lines[4].starts_with("y_final,"));
        assert!(lines[4].ends_with(",,"));
        let back = TrajectoryData::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn multi_component_header() {
        let blocks = RowBlock::layout(&[Vertex::new("a", 2), Vertex::new("b", 1)]);
        let traj = TrajectoryData::new(
            Matrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]),
            Matrix::from_row_slice(3, 1, &[4.0, 5.0, 6.0]),
            Matrix::zeros(0, 1),
            blocks.clone(),
            vec![],
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,a:0,a:1,b:0\n"));
        let back = TrajectoryData::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.state_rows, blocks);
        assert_eq!(back, traj);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(TrajectoryData::read_csv("t,v1:0\n1,2\ny_final,3\n".as_bytes()).is_err());
        assert!(TrajectoryData::read_csv("k,v1:0\n1,2\n".as_bytes()).is_err());
        assert!(TrajectoryData::read_csv("k,v1:1\n1,2\ny_final,3\n".as_bytes()).is_err());
        assert!(TrajectoryData::read_csv("k,v1:0\n2,2\ny_final,3\n".as_bytes()).is_err());
        assert!(TrajectoryData::read_csv("k,v1:0\n1,abc\ny_final,3\n".as_bytes()).is_err());
    }

    #[test]
    fn shape_checks() {
        let rows = RowBlock::layout(&[Vertex::new("a", 1)]);
        assert!(TrajectoryData::new(
            Matrix::zeros(1, 0),
            Matrix::zeros(1, 0),
            Matrix::zeros(0, 0),
            rows.clone(),
            vec![]
        )
        .is_err());
        assert!(TrajectoryData::new(
            Matrix::zeros(1, 2),
            Matrix::zeros(1, 3),
            Matrix::zeros(0, 2),
            rows.clone(),
            vec![]
        )
        .is_err());
        assert!(matches!(
            TrajectoryData::new(
                Matrix::zeros(2, 2),
                Matrix::zeros(2, 2),
                Matrix::zeros(0, 2),
                rows,
                vec![]
            ),
            Err(Error::RowRangeMismatch(_))
        ));
    }

    #[test]
    fn fingerprint_tracks_bits() {
        let traj = two_node_system()
            .simulate(&Vector::from_vec(vec![2.0, 5.0]), &two_node_inputs())
            .unwrap();
        let mut other = traj.clone();
        assert_eq!(traj.fingerprint(), other.fingerprint());
        other.gamma[(0, 0)] = f64::from_bits(other.gamma[(0, 0)].to_bits() + 1);
        assert_ne!(traj.fingerprint(), other.fingerprint());
    }
}
