use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lattice::Lattice;
use super::GridSpec;
use crate::filter::ControlPair;
use crate::{Control, Error, ModelId, ModelParams, Result, State};

/// File extension of persisted value grids.
pub const VGRID_EXTENSION: &str = "vgrid";

const FORMAT_TAG: &str = "qubit-control-vgrid";
const FORMAT_VERSION: u32 = 1;
const MAX_HEADER_BYTES: u64 = 1 << 20;

/// Cost-to-go and minimizing controls on every node of every time slice.
///
/// Slice `n` holds `J(n dt, .)`; its controls are the ones applied on
/// `[n dt, (n + 1) dt)`. Masked nodes carry copies of active nodes.
#[derive(Debug, Clone)]
pub struct ValueGrid {
    spec: GridSpec,
    params: ModelParams,
    values: Vec<f64>,
    controls: Vec<f64>,
    lattice: Lattice,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[serde(flatten)]
    spec: GridSpec,
    kappa_s_sq: f64,
    kappa_f_sq: f64,
    alpha: f64,
    horizon: f64,
    control_dim: usize,
    node_count: usize,
}

impl PartialEq for ValueGrid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.params == other.params
            && self.values == other.values
            && self.controls == other.controls
    }
}

impl ValueGrid {
    pub(crate) fn from_parts(
        spec: GridSpec,
        params: ModelParams,
        values: Vec<f64>,
        controls: Vec<f64>,
    ) -> Result<Self> {
        spec.validate(&params)?;
        let lattice = Lattice::new(&spec);
        let slices = spec.steps + 1;
        let width = spec.model.control_dim();
        if values.len() != slices * lattice.len || controls.len() != slices * lattice.len * width {
            return Err(Error::Format(format!(
                "expected {} values and {} controls, got {} and {}",
                slices * lattice.len,
                slices * lattice.len * width,
                values.len(),
                controls.len()
            )));
        }
        Ok(ValueGrid {
            spec,
            params,
            values,
            controls,
            lattice,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn model(&self) -> ModelId {
        self.spec.model
    }

    pub fn steps(&self) -> usize {
        self.spec.steps
    }

    pub fn node_count(&self) -> usize {
        self.lattice.len
    }

    /// Values of slice `n` in node order.
    pub fn slice(&self, n: usize) -> &[f64] {
        let m = self.lattice.len;
        &self.values[n * m..(n + 1) * m]
    }

    /// Controls of slice `n`, `control_dim` entries per node.
    pub fn control_slice(&self, n: usize) -> &[f64] {
        let w = self.spec.model.control_dim() * self.lattice.len;
        &self.controls[n * w..(n + 1) * w]
    }

    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        self.lattice.coords(node)[..self.lattice.dim].to_vec()
    }

    /// False for qubit nodes outside the unit ball.
    pub fn is_active(&self, node: usize) -> bool {
        self.lattice.active[node]
    }

    pub fn control_at_node(&self, n: usize, node: usize) -> Control {
        let w = self.spec.model.control_dim();
        let c = &self.control_slice(n)[node * w..(node + 1) * w];
        self.to_control(c)
    }

    fn to_control(&self, c: &[f64]) -> Control {
        if self.spec.model.is_qubit() {
            Control::Pair(ControlPair::new(c[0], c[1]))
        } else {
            Control::Field(c[0])
        }
    }

    /// Multilinear interpolation of slice `n` at `x`, clamped into the bounds.
    pub fn interpolate_value(&self, n: usize, x: &[f64]) -> f64 {
        self.lattice.interpolate_scalar(self.slice(n), x)
    }

    pub fn interpolate_control(&self, n: usize, x: &[f64]) -> Control {
        let w = self.spec.model.control_dim();
        let mut out = [0.0; 2];
        self.lattice.interpolate(self.control_slice(n), w, x, &mut out);
        self.to_control(&out[..w])
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let horizon = self.params.horizon();
        let slack = 1e-12 * horizon.max(1.0);
        if !(t.is_finite() && t >= -slack && t <= horizon + slack) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        Ok(())
    }

    /// Slice whose controls apply at time `t`: `floor(t / dt)`, clamped to
    /// the last interval so that `t = T` uses the terminal-adjacent slice.
    pub fn control_slice_index(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        let n = self.spec.steps;
        if n == 0 {
            return Ok(0);
        }
        let k = (t / self.spec.dt + 1e-9).floor().max(0.0) as usize;
        Ok(k.min(n - 1))
    }

    /// Nearest slice to time `t`.
    pub fn value_slice_index(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        let k = (t / self.spec.dt).round().max(0.0) as usize;
        Ok(k.min(self.spec.steps))
    }

    /// Interpolated cost-to-go at `(t, state)`.
    pub fn value(&self, t: f64, state: &State) -> Result<f64> {
        self.check_state(state)?;
        let n = self.value_slice_index(t)?;
        Ok(self.interpolate_value(n, &state.coords()))
    }

    pub(crate) fn check_state(&self, state: &State) -> Result<()> {
        if state.matches(self.spec.model) {
            Ok(())
        } else {
            Err(Error::ModelMismatch {
                expected: self.spec.model.to_string(),
                found: match state {
                    State::Bloch(_) => "qubit state".into(),
                    State::Angle(_) => "angle state".into(),
                },
            })
        }
    }

    /// Smallest and largest value over active nodes of all slices.
    pub fn value_range(&self) -> (f64, f64) {
        let m = self.lattice.len;
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.lattice.active[i % m])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Rejects a grid solved for another model or other parameters.
    pub fn check_compatible(&self, model: ModelId, params: &ModelParams) -> Result<()> {
        if model != self.spec.model {
            return Err(Error::ModelMismatch {
                expected: model.to_string(),
                found: self.spec.model.to_string(),
            });
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        let mine = &self.params;
        if !(close(mine.kappa_s_sq(), params.kappa_s_sq())
            && close(mine.alpha(), params.alpha())
            && close(mine.horizon(), params.horizon()))
        {
            return Err(Error::ModelMismatch {
                expected: describe(params),
                found: describe(mine),
            });
        }
        Ok(())
    }

    /// Writes the grid atomically: to a temporary file in the target
    /// directory, then renamed over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        {
            let mut w = BufWriter::new(tmp.as_file_mut());
            self.write_to(&mut w)?;
            w.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path.as_ref())?;
        Self::read_from(BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            spec: self.spec.clone(),
            kappa_s_sq: self.params.kappa_s_sq(),
            kappa_f_sq: self.params.kappa_f_sq(),
            alpha: self.params.alpha(),
            horizon: self.params.horizon(),
            control_dim: self.spec.model.control_dim(),
            node_count: self.lattice.len,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for x in self.values.iter().chain(&self.controls) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = Vec::new();
        (&mut r).take(MAX_HEADER_BYTES).read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(Error::Format("missing or oversized header line".into()));
        }
        let header: Header = serde_json::from_slice(&line)
            .map_err(|e| Error::Format(format!("bad header: {e}")))?;
        if header.format != FORMAT_TAG || header.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format {} version {}",
                header.format, header.version
            )));
        }
        let params = ModelParams::new(header.kappa_s_sq, header.kappa_f_sq, header.alpha, header.horizon)?;
        let spec = header.spec;
        spec.validate(&params)?;
        let nodes = spec.node_count();
        if header.node_count != nodes || header.control_dim != spec.model.control_dim() {
            return Err(Error::Format("header counts disagree with the grid spec".into()));
        }
        let slices = spec.steps + 1;
        let values = read_f64s(&mut r, slices * nodes)?;
        let controls = read_f64s(&mut r, slices * nodes * header.control_dim)?;
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        if let Some(i) = values.iter().chain(&controls).position(|x| !x.is_finite()) {
            return Err(Error::Format(format!("non-finite entry at payload index {i}")));
        }
        Self::from_parts(spec, params, values, controls)
    }
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for i in 0..count {
        r.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => {
                Error::Format(format!("payload truncated: expected {count} values, got {i}"))
            }
            _ => Error::Io(e),
        })?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

fn describe(p: &ModelParams) -> String {
    format!(
        "kappa_s^2 = {}, alpha = {}, T = {}",
        p.kappa_s_sq(),
        p.alpha(),
        p.horizon()
    )
}
