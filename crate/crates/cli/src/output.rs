//! Diagnostics CSV, VTU snapshots and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use emacreg::diagnostics::DiagnosticsRecord;
use emacreg::schemes::State;
use emacreg::space::{basis_grad_coeffs, Field};
use serde::Serialize;

use crate::config::{RawConfig, RunConfig};
use crate::{CliError, Result};

pub const CSV_HEADER: &str =
    "t,energy_model,energy_kinetic,momentum_x,momentum_y,ang_momentum,enstrophy,div_u,div_w,err_l2_u,err_l2_w,err_h1_w";

/// 17 significant digits, enough to reproduce every `f64` exactly.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = String::with_capacity(64 + records.len() * 280);
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let cols = [
            num(r.t),
            num(r.energy_model),
            num(r.energy_kinetic),
            num(r.momentum[0]),
            num(r.momentum[1]),
            num(r.ang_momentum),
            num(r.enstrophy),
            num(r.div_u),
            num(r.div_w),
            opt(r.err_l2_u),
            opt(r.err_l2_w),
            opt(r.err_h1_w),
        ];
        s.push_str(&cols.join(","));
        s.push('\n');
    }
    s
}

pub fn write_diagnostics_csv(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(CliError::Config("no diagnostics records to write".into()));
    }
    fs::write(path, diagnostics_csv(records)).map_err(|e| CliError::io(path, e))
}

pub fn parse_diagnostics_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(CliError::Csv { line: 1, msg: "unexpected header".into() }),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| CliError::Csv { line: i + 1, msg };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 12 {
            return Err(err(format!("expected 12 columns, found {}", cells.len())));
        }
        let parse = |c: &str| c.trim().parse::<f64>().map_err(|e| err(format!("`{c}`: {e}")));
        let maybe = |c: &str| if c.trim().is_empty() { Ok(None) } else { parse(c).map(Some) };
        out.push(DiagnosticsRecord {
            t: parse(cells[0])?,
            energy_model: parse(cells[1])?,
            energy_kinetic: parse(cells[2])?,
            momentum: [parse(cells[3])?, parse(cells[4])?],
            ang_momentum: parse(cells[5])?,
            enstrophy: parse(cells[6])?,
            div_u: parse(cells[7])?,
            div_w: parse(cells[8])?,
            err_l2_u: maybe(cells[9])?,
            err_l2_w: maybe(cells[10])?,
            err_h1_w: maybe(cells[11])?,
        });
    }
    Ok(out)
}

pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    parse_diagnostics_csv(&fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
}

/// Barycentric coordinates of the six P2 nodes: vertices, then the
/// midpoints of edges 0-1, 1-2, 2-0.
const NODE_BARY: [[f64; 3]; 6] =
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

/// Each P2 triangle split into four P1 triangles over its nodes.
const SUB_CELLS: [[usize; 3]; 4] = [[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]];

/// Refined-P1 sampling of a state. Points are duplicated per cell so
/// periodic and discontinuous data need no special handling.
struct Sampled {
    points: Vec<[f64; 2]>,
    u: Vec<[f64; 2]>,
    w: Vec<[f64; 2]>,
    vorticity: Vec<f64>,
    pressure: Vec<f64>,
}

fn nodal(field: &Field, t: usize, k: usize) -> [f64; 2] {
    let n = field.space.cell_nodes(t)[k];
    [field.coefficients[2 * n], field.coefficients[2 * n + 1]]
}

fn sample(state: &State) -> Sampled {
    let space = &state.u.space;
    let mesh = space.mesh();
    let cells = space.num_cells();
    let mut s = Sampled {
        points: Vec::with_capacity(6 * cells),
        u: Vec::with_capacity(6 * cells),
        w: Vec::with_capacity(6 * cells),
        vorticity: Vec::with_capacity(6 * cells),
        pressure: Vec::with_capacity(4 * cells),
    };
    let mut coef = [[0.0; 3]; 6];
    for t in 0..cells {
        let tri = mesh.triangles[t];
        let g = space.geometry(t).grad_lambda;
        for l in NODE_BARY {
            let mut x = [0.0; 2];
            for (k, &v) in tri.iter().enumerate() {
                x[0] += l[k] * mesh.vertices[v][0];
                x[1] += l[k] * mesh.vertices[v][1];
            }
            s.points.push(x);
            basis_grad_coeffs(2, l, &mut coef);
            // vorticity = d(u_y)/dx - d(u_x)/dy
            let mut curl = 0.0;
            for (k, c) in coef.iter().enumerate() {
                let gk = [
                    c[0] * g[0][0] + c[1] * g[1][0] + c[2] * g[2][0],
                    c[0] * g[0][1] + c[1] * g[1][1] + c[2] * g[2][1],
                ];
                let uk = nodal(&state.u, t, k);
                curl += uk[1] * gk[0] - uk[0] * gk[1];
            }
            s.vorticity.push(curl);
        }
        for k in 0..6 {
            s.u.push(nodal(&state.u, t, k));
            s.w.push(nodal(&state.w, t, k));
        }
        let pn = state.p.space.cell_nodes(t);
        for sub in SUB_CELLS {
            let mut v = 0.0;
            for node in sub {
                let l = NODE_BARY[node];
                v += (0..3).map(|k| l[k] * state.p.coefficients[pn[k]]).sum::<f64>() / 3.0;
            }
            s.pressure.push(v);
        }
    }
    s
}

fn data_array(out: &mut String, name: &str, ty: &str, comps: usize, values: impl Iterator<Item = String>) {
    let _ = write!(out, "        <DataArray type=\"{ty}\" Name=\"{name}\"");
    if comps > 1 {
        let _ = write!(out, " NumberOfComponents=\"{comps}\"");
    }
    out.push_str(" format=\"ascii\">\n");
    for v in values {
        out.push_str("          ");
        out.push_str(&v);
        out.push('\n');
    }
    out.push_str("        </DataArray>\n");
}

fn vec3(v: &[f64; 2]) -> String {
    format!("{:e} {:e} 0", v[0], v[1])
}

/// VTK XML unstructured grid with inline ASCII data.
pub fn vtu_string(state: &State) -> String {
    let s = sample(state);
    let npts = s.points.len();
    let ncells = s.pressure.len();
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\"?>\n");
    out.push_str("<VTKFile type=\"UnstructuredGrid\" version=\"1.0\" byte_order=\"LittleEndian\" header_type=\"UInt64\">\n");
    out.push_str("  <UnstructuredGrid>\n");
    let _ = writeln!(out, "    <FieldData>\n      <DataArray type=\"Float64\" Name=\"TIME\" NumberOfTuples=\"1\" format=\"ascii\">{:e}</DataArray>\n    </FieldData>", state.t);
    let _ = writeln!(out, "    <Piece NumberOfPoints=\"{npts}\" NumberOfCells=\"{ncells}\">");
    out.push_str("      <PointData Vectors=\"u\" Scalars=\"speed\">\n");
    data_array(&mut out, "u", "Float64", 3, s.u.iter().map(vec3));
    data_array(&mut out, "w", "Float64", 3, s.w.iter().map(vec3));
    data_array(&mut out, "speed", "Float64", 1, s.u.iter().map(|v| format!("{:e}", v[0].hypot(v[1]))));
    data_array(&mut out, "vorticity", "Float64", 1, s.vorticity.iter().map(|v| format!("{v:e}")));
    out.push_str("      </PointData>\n      <CellData Scalars=\"pressure\">\n");
    data_array(&mut out, "pressure", "Float64", 1, s.pressure.iter().map(|v| format!("{v:e}")));
    out.push_str("      </CellData>\n      <Points>\n");
    data_array(&mut out, "Points", "Float64", 3, s.points.iter().map(vec3));
    out.push_str("      </Points>\n      <Cells>\n");
    let cells = (0..ncells / 4).flat_map(|t| SUB_CELLS.iter().map(move |c| c.map(|k| 6 * t + k)));
    data_array(&mut out, "connectivity", "Int64", 1, cells.map(|c| format!("{} {} {}", c[0], c[1], c[2])));
    data_array(&mut out, "offsets", "Int64", 1, (1..=ncells).map(|i| (3 * i).to_string()));
    data_array(&mut out, "types", "UInt8", 1, (0..ncells).map(|_| "5".to_string()));
    out.push_str("      </Cells>\n    </Piece>\n  </UnstructuredGrid>\n</VTKFile>\n");
    out
}

pub fn write_vtu(state: &State, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(vtu_string(state).as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    code_version: String,
    outputs: Vec<String>,
    warnings: &'a [String],
    config: RawConfig,
}

/// Writes `manifest.toml`: the configuration echo, the code version and
/// the list of files produced.
pub fn write_manifest(cfg: &RunConfig, outputs: &[String], dir: &Path) -> Result<()> {
    let manifest = Manifest {
        code_version: format!("emacreg {}", env!("CARGO_PKG_VERSION")),
        outputs: outputs.to_vec(),
        warnings: &cfg.warnings,
        config: cfg.echo(),
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    let path = dir.join("manifest.toml");
    fs::write(&path, text).map_err(|e| CliError::io(path, e))
}
