//! Readers and writers for TetGen `.node/.ele`, legacy ASCII VTK unstructured
//! grids and Wavefront OBJ.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mesh::{TetMesh, TriMesh, Vec3};
use super::GeometryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TetFormat {
    /// `<base>.node` + `<base>.ele`
    TetgenNodeEle,
    VtkLegacyAscii,
}

impl TetFormat {
    /// Guess from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "node" | "ele" => Some(Self::TetgenNodeEle),
            "vtk" => Some(Self::VtkLegacyAscii),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriFormat {
    Obj,
}

fn read(path: &Path) -> Result<String, GeometryError> {
    fs::read_to_string(path).map_err(|source| GeometryError::Io { path: path.to_path_buf(), source })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> GeometryError {
    GeometryError::Parse { path: path.to_path_buf(), line, message: msg.into() }
}

pub fn load_tet_mesh(path: &Path, format: TetFormat) -> Result<TetMesh, GeometryError> {
    let (vertices, tets) = match format {
        TetFormat::TetgenNodeEle => read_tetgen(path)?,
        TetFormat::VtkLegacyAscii => read_vtk(path)?,
    };
    let build = TetMesh::new(vertices, tets)?;
    if !build.flipped.is_empty() {
        log::info!("{}: reoriented tets {:?}", path.display(), build.flipped);
    }
    Ok(build.mesh)
}

pub fn load_tri_mesh(path: &Path, format: TriFormat) -> Result<TriMesh, GeometryError> {
    match format {
        TriFormat::Obj => {
            let (v, f) = parse_obj(path, &read(path)?)?;
            TriMesh::new(v, f)
        }
    }
}

/// Data lines with comments stripped, paired with 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        let toks: Vec<&str> = l.split_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

fn num<T: std::str::FromStr>(path: &Path, line: usize, tok: &str) -> Result<T, GeometryError> {
    tok.parse().map_err(|_| parse_err(path, line, format!("bad number `{tok}`")))
}

fn tetgen_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("node"), path.with_extension("ele"))
}

fn read_tetgen(path: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 4]>), GeometryError> {
    let (node_path, ele_path) = tetgen_paths(path);
    let node_text = read(&node_path)?;
    let mut lines = data_lines(&node_text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(&node_path, 0, "empty .node file"))?;
    let n: usize = num(&node_path, hl, header[0])?;
    if header.get(1).map(|d| *d != "3").unwrap_or(false) {
        return Err(parse_err(&node_path, hl, "only 3D node files are supported"));
    }
    let mut vertices = Vec::with_capacity(n);
    let mut base = None;
    for (ln, toks) in lines.take(n) {
        if toks.len() < 4 {
            return Err(parse_err(&node_path, ln, "expected `index x y z`"));
        }
        let idx: usize = num(&node_path, ln, toks[0])?;
        let first = *base.get_or_insert(idx);
        if first > 1 {
            return Err(parse_err(&node_path, ln, "first node index must be 0 or 1"));
        }
        if idx != first + vertices.len() {
            return Err(parse_err(&node_path, ln, format!("node index {idx} out of sequence")));
        }
        vertices.push(Vec3::new(
            num(&node_path, ln, toks[1])?,
            num(&node_path, ln, toks[2])?,
            num(&node_path, ln, toks[3])?,
        ));
    }
    if vertices.len() != n {
        return Err(parse_err(&node_path, 0, format!("expected {n} nodes, found {}", vertices.len())));
    }
    let base = base.unwrap_or(0);

    let ele_text = read(&ele_path)?;
    let mut lines = data_lines(&ele_text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(&ele_path, 0, "empty .ele file"))?;
    let m: usize = num(&ele_path, hl, header[0])?;
    let per: usize = header.get(1).map(|t| num(&ele_path, hl, t)).transpose()?.unwrap_or(4);
    if per != 4 {
        return Err(parse_err(&ele_path, hl, format!("only linear tets supported, got {per} nodes per element")));
    }
    let mut tets = Vec::with_capacity(m);
    for (ln, toks) in lines.take(m) {
        if toks.len() < 5 {
            return Err(parse_err(&ele_path, ln, "expected `index n0 n1 n2 n3`"));
        }
        let mut t = [0usize; 4];
        for k in 0..4 {
            let raw: usize = num(&ele_path, ln, toks[k + 1])?;
            t[k] = raw.checked_sub(base).ok_or(GeometryError::IndexOutOfRange {
                element: tets.len(),
                index: raw,
                count: n,
            })?;
        }
        tets.push(t);
    }
    if tets.len() != m {
        return Err(parse_err(&ele_path, 0, format!("expected {m} tets, found {}", tets.len())));
    }
    Ok((vertices, tets))
}

fn read_vtk(path: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 4]>), GeometryError> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or("");
    if !header.starts_with("# vtk DataFile") {
        return Err(parse_err(path, 1, "missing `# vtk DataFile` header"));
    }
    lines.next(); // title
    match lines.next() {
        Some((_, l)) if l.trim().eq_ignore_ascii_case("ASCII") => {}
        _ => return Err(parse_err(path, 3, "only ASCII legacy VTK is supported")),
    }
    // Flatten the remainder into (line, token) pairs.
    let toks: Vec<(usize, &str)> = lines.flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t))).collect();
    let mut pos = 0;
    let mut next = |what: &str| -> Result<(usize, &str), GeometryError> {
        let t = toks
            .get(pos)
            .copied()
            .ok_or_else(|| parse_err(path, 0, format!("unexpected end of file, expected {what}")))?;
        pos += 1;
        Ok(t)
    };
    let mut points: Vec<Vec3> = Vec::new();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut types: Vec<u32> = Vec::new();
    let mut saw_dataset = false;
    while let Ok((ln, kw)) = next("keyword") {
        match kw.to_ascii_uppercase().as_str() {
            "DATASET" => {
                let (ln, kind) = next("dataset type")?;
                if !kind.eq_ignore_ascii_case("UNSTRUCTURED_GRID") {
                    return Err(parse_err(path, ln, format!("unsupported dataset `{kind}`")));
                }
                saw_dataset = true;
            }
            "POINTS" => {
                let (ln, n) = next("point count")?;
                let n: usize = num(path, ln, n)?;
                next("point data type")?;
                points.reserve(n);
                for _ in 0..n {
                    let mut c = [0.0; 3];
                    for v in &mut c {
                        let (ln, t) = next("coordinate")?;
                        *v = num(path, ln, t)?;
                    }
                    points.push(Vec3::from(c));
                }
            }
            "CELLS" => {
                let (ln, m) = next("cell count")?;
                let m: usize = num(path, ln, m)?;
                next("cell list size")?;
                for _ in 0..m {
                    let (ln, k) = next("cell size")?;
                    let k: usize = num(path, ln, k)?;
                    let mut c = Vec::with_capacity(k);
                    for _ in 0..k {
                        let (ln, t) = next("cell index")?;
                        c.push(num(path, ln, t)?);
                    }
                    cells.push(c);
                }
            }
            "CELL_TYPES" => {
                let (ln, m) = next("cell type count")?;
                let m: usize = num(path, ln, m)?;
                for _ in 0..m {
                    let (ln, t) = next("cell type")?;
                    types.push(num(path, ln, t)?);
                }
            }
            // Attribute sections are not needed; stop at the first one.
            "POINT_DATA" | "CELL_DATA" | "FIELD" => break,
            _ => return Err(parse_err(path, ln, format!("unexpected token `{kw}`"))),
        }
    }
    if !saw_dataset {
        return Err(parse_err(path, 0, "missing DATASET UNSTRUCTURED_GRID"));
    }
    if types.len() != cells.len() {
        return Err(parse_err(path, 0, format!("{} cells but {} cell types", cells.len(), types.len())));
    }
    let mut tets = Vec::new();
    for (i, (c, ty)) in cells.iter().zip(&types).enumerate() {
        match ty {
            10 if c.len() == 4 => tets.push([c[0], c[1], c[2], c[3]]),
            // vertices, lines and triangles are boundary annotations
            1 | 3 | 5 => {}
            _ => return Err(parse_err(path, 0, format!("cell {i}: unsupported cell type {ty}"))),
        }
    }
    if tets.is_empty() {
        return Err(parse_err(path, 0, "no tetrahedral cells (type 10)"));
    }
    Ok((points, tets))
}

fn parse_obj(path: &Path, text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>), GeometryError> {
    let mut v = Vec::new();
    let mut f = Vec::new();
    for (ln, toks) in data_lines(text) {
        match toks[0] {
            "v" => {
                if toks.len() < 4 {
                    return Err(parse_err(path, ln, "vertex needs three coordinates"));
                }
                v.push(Vec3::new(num(path, ln, toks[1])?, num(path, ln, toks[2])?, num(path, ln, toks[3])?));
            }
            "f" => {
                if toks.len() != 4 {
                    return Err(GeometryError::NonTriangleFace {
                        path: path.to_path_buf(),
                        line: ln,
                        vertices: toks.len() - 1,
                    });
                }
                let mut tri = [0usize; 3];
                for k in 0..3 {
                    let idx_tok = toks[k + 1].split('/').next().unwrap_or("");
                    let raw: i64 = num(path, ln, idx_tok)?;
                    let idx = if raw > 0 {
                        raw - 1
                    } else if raw < 0 {
                        v.len() as i64 + raw
                    } else {
                        -1
                    };
                    if idx < 0 || idx as usize >= v.len() {
                        return Err(parse_err(path, ln, format!("dangling vertex index {raw}")));
                    }
                    tri[k] = idx as usize;
                }
                f.push(tri);
            }
            _ => {}
        }
    }
    Ok((v, f))
}

pub fn write_obj(path: &Path, vertices: &[Vec3], tris: &[[usize; 3]]) -> Result<(), GeometryError> {
    let mut s = String::new();
    for p in vertices {
        writeln!(s, "v {:e} {:e} {:e}", p.x, p.y, p.z).unwrap();
    }
    for t in tris {
        writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    fs::write(path, s).map_err(|source| GeometryError::Io { path: path.to_path_buf(), source })
}

/// Writes `<base>.node` / `<base>.ele` with 0-based indices.
pub fn write_tetgen(path: &Path, vertices: &[Vec3], tets: &[[usize; 4]]) -> Result<(), GeometryError> {
    let (node_path, ele_path) = tetgen_paths(path);
    let mut s = format!("{} 3 0 0\n", vertices.len());
    for (i, p) in vertices.iter().enumerate() {
        writeln!(s, "{i} {:e} {:e} {:e}", p.x, p.y, p.z).unwrap();
    }
    fs::write(&node_path, s).map_err(|source| GeometryError::Io { path: node_path.clone(), source })?;
    let mut s = format!("{} 4 0\n", tets.len());
    for (i, t) in tets.iter().enumerate() {
        writeln!(s, "{i} {} {} {} {}", t[0], t[1], t[2], t[3]).unwrap();
    }
    fs::write(&ele_path, s).map_err(|source| GeometryError::Io { path: ele_path.clone(), source })
}

pub fn write_vtk(path: &Path, vertices: &[Vec3], tets: &[[usize; 4]]) -> Result<(), GeometryError> {
    let mut s = String::from("# vtk DataFile Version 2.0\ntacsim tet mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {} double", vertices.len()).unwrap();
    for p in vertices {
        writeln!(s, "{:e} {:e} {:e}", p.x, p.y, p.z).unwrap();
    }
    writeln!(s, "CELLS {} {}", tets.len(), tets.len() * 5).unwrap();
    for t in tets {
        writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]).unwrap();
    }
    writeln!(s, "CELL_TYPES {}", tets.len()).unwrap();
    for _ in tets {
        s.push_str("10\n");
    }
    fs::write(path, s).map_err(|source| GeometryError::Io { path: path.to_path_buf(), source })
}
