//! Reader and writer for the NSC text format.
//!
//! ```text
//! nsc 1
//! dim <k> ambient <n>
//! vertices <N>
//! <n floats per line>
//! simplices <m>
//! <k+1 one-based indices per line>
//! density <m>          (optional)
//! <one float per line>
//! ```
//!
//! Map files share the header, carry `dim n ambient n`, and replace the
//! vertex and simplex blocks with `maps <N>` followed by N coordinate rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::geometry::DEGENERACY_TOL;
use super::{PiecewiseAffineMap, SimplicialComplex};
use crate::error::{Error, Result};

/// A mesh as loaded from disk.
#[derive(Debug, Clone)]
pub struct MeshFile {
    pub complex: SimplicialComplex,
    pub density: Option<Vec<f64>>,
    /// Simplices whose orientation was flipped to make signed volumes
    /// positive.
    pub flipped: usize,
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            line: self.last,
            msg: msg.into(),
        }
    }

    /// Next non-blank line, split into tokens.
    fn next_tokens(&mut self, what: &str) -> Result<Vec<&'a str>> {
        for (no, line) in self.inner.by_ref() {
            self.last = no + 1;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if !tokens.is_empty() {
                return Ok(tokens);
            }
        }
        self.last += 1;
        Err(self.err(format!("unexpected end of file, expected {what}")))
    }

    fn try_next_tokens(&mut self) -> Option<Vec<&'a str>> {
        for (no, line) in self.inner.by_ref() {
            self.last = no + 1;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if !tokens.is_empty() {
                return Some(tokens);
            }
        }
        None
    }

    fn parse<T: FromStr>(&self, token: &str, what: &str) -> Result<T> {
        token
            .parse()
            .map_err(|_| self.err(format!("cannot parse {what} from {token:?}")))
    }

    /// Parses a `<keyword> <count>` line.
    fn section(&mut self, keyword: &str) -> Result<usize> {
        let t = self.next_tokens(keyword)?;
        self.section_from(&t, keyword)
    }

    fn section_from(&self, t: &[&str], keyword: &str) -> Result<usize> {
        if t.len() != 2 || t[0] != keyword {
            return Err(self.err(format!("expected `{keyword} <count>`, found {:?}", t.join(" "))));
        }
        self.parse(t[1], "count")
    }

    fn floats(&mut self, count: usize, width: usize, what: &str) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count * width);
        for _ in 0..count {
            let t = self.next_tokens(what)?;
            if t.len() != width {
                return Err(self.err(format!("expected {width} values, found {}", t.len())));
            }
            for tok in t {
                let x: f64 = self.parse(tok, "a number")?;
                if !x.is_finite() {
                    return Err(self.err(format!("non-finite value {tok}")));
                }
                out.push(x);
            }
        }
        Ok(out)
    }

    fn header(&mut self) -> Result<(usize, usize)> {
        let t = self.next_tokens("header")?;
        if t != ["nsc", "1"] {
            return Err(self.err(format!("expected `nsc 1`, found {:?}", t.join(" "))));
        }
        let t = self.next_tokens("dimensions")?;
        if t.len() != 4 || t[0] != "dim" || t[2] != "ambient" {
            return Err(self.err("expected `dim <k> ambient <n>`"));
        }
        let k: usize = self.parse(t[1], "dim")?;
        let n: usize = self.parse(t[3], "ambient")?;
        if n == 0 || k == 0 || k > n {
            return Err(Error::DimensionMismatch(format!(
                "dim {k} ambient {n} is not a valid pair"
            )));
        }
        Ok((k, n))
    }
}

pub fn parse_mesh(text: &str) -> Result<MeshFile> {
    let mut lines = Lines::new(text);
    let (k, n) = lines.header()?;
    let nv = lines.section("vertices")?;
    let vertices = lines.floats(nv, n, "vertex coordinates")?;
    let m = lines.section("simplices")?;
    let mut simplices = Vec::with_capacity(m * (k + 1));
    for s in 0..m {
        let t = lines.next_tokens("simplex indices")?;
        if t.len() != k + 1 {
            return Err(lines.err(format!("expected {} indices, found {}", k + 1, t.len())));
        }
        for tok in t {
            let i: usize = lines.parse(tok, "an index")?;
            if i == 0 || i > nv {
                return Err(Error::IndexOutOfRange {
                    simplex: s,
                    index: i,
                    count: nv,
                });
            }
            simplices.push(i - 1);
        }
    }
    let density = match lines.try_next_tokens() {
        None => None,
        Some(t) => {
            let count = lines.section_from(&t, "density")?;
            if count != m {
                return Err(lines.err(format!("density count {count} differs from {m} simplices")));
            }
            let d = lines.floats(m, 1, "density")?;
            if let Some(s) = d.iter().position(|&r| !(r > 0.0)) {
                return Err(Error::InvalidMass {
                    simplex: s,
                    value: d[s],
                });
            }
            Some(d)
        }
    };
    if let Some(t) = lines.try_next_tokens() {
        return Err(lines.err(format!("trailing content {:?}", t.join(" "))));
    }

    let mut complex = SimplicialComplex::new(n, k, vertices, simplices)?;
    let flipped = complex.normalize_orientation();
    complex.check_nondegenerate(DEGENERACY_TOL)?;
    Ok(MeshFile {
        complex,
        density,
        flipped,
    })
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<MeshFile> {
    parse_mesh(&fs::read_to_string(path)?)
}

fn push_row(out: &mut String, row: &[f64]) {
    for (a, x) in row.iter().enumerate() {
        if a > 0 {
            out.push(' ');
        }
        write!(out, "{x:.16e}").unwrap();
    }
    out.push('\n');
}

pub fn format_mesh(complex: &SimplicialComplex, density: Option<&[f64]>) -> String {
    let (k, n) = (complex.top_dim(), complex.ambient_dim());
    let mut out = String::new();
    writeln!(out, "nsc 1\ndim {k} ambient {n}").unwrap();
    writeln!(out, "vertices {}", complex.num_vertices()).unwrap();
    for i in 0..complex.num_vertices() {
        push_row(&mut out, complex.vertex(i));
    }
    writeln!(out, "simplices {}", complex.num_simplices()).unwrap();
    for s in complex.simplices() {
        let line: Vec<String> = s.iter().map(|i| (i + 1).to_string()).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    if let Some(d) = density {
        writeln!(out, "density {}", d.len()).unwrap();
        for r in d {
            writeln!(out, "{r:.16e}").unwrap();
        }
    }
    out
}

pub fn write_mesh(
    path: impl AsRef<Path>,
    complex: &SimplicialComplex,
    density: Option<&[f64]>,
) -> Result<()> {
    fs::write(path, format_mesh(complex, density))?;
    Ok(())
}

pub fn format_map(map: &PiecewiseAffineMap) -> String {
    let n = map.dim();
    let mut out = String::new();
    writeln!(out, "nsc 1\ndim {n} ambient {n}\nmaps {}", map.rows()).unwrap();
    for i in 0..map.rows() {
        push_row(&mut out, map.row(i));
    }
    out
}

pub fn parse_map(text: &str) -> Result<PiecewiseAffineMap> {
    let mut lines = Lines::new(text);
    let (k, n) = lines.header()?;
    if k != n {
        return Err(Error::DimensionMismatch(format!(
            "map files need dim equal to ambient, found dim {k} ambient {n}"
        )));
    }
    let rows = lines.section("maps")?;
    let coords = lines.floats(rows, n, "map coordinates")?;
    if let Some(t) = lines.try_next_tokens() {
        return Err(lines.err(format!("trailing content {:?}", t.join(" "))));
    }
    PiecewiseAffineMap::new(n, coords)
}

pub fn write_map(path: impl AsRef<Path>, map: &PiecewiseAffineMap) -> Result<()> {
    fs::write(path, format_map(map))?;
    Ok(())
}

pub fn read_map(path: impl AsRef<Path>) -> Result<PiecewiseAffineMap> {
    parse_map(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TET: &str = "nsc 1\ndim 3 ambient 3\nvertices 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\nsimplices 1\n1 2 3 4\n";

    #[test]
    fn single_tet() {
        let m = parse_mesh(TET).unwrap();
        assert_eq!(m.complex.num_vertices(), 4);
        assert_eq!(m.complex.num_simplices(), 1);
        assert_eq!(m.flipped, 0);
        assert!(m.density.is_none());
    }

    #[test]
    fn negative_orientation_is_flipped() {
        let text = TET.replace("1 2 3 4", "2 1 3 4");
        let m = parse_mesh(&text).unwrap();
        assert_eq!(m.flipped, 1);
        assert!(m.complex.signed_volume(0).unwrap() > 0.0);
    }

    #[test]
    fn distinct_diagnostics() {
        let bad_index = TET.replace("1 2 3 4", "1 2 3 5");
        assert!(matches!(
            parse_mesh(&bad_index),
            Err(Error::IndexOutOfRange { index: 5, .. })
        ));
        let bad_header = TET.replace("nsc 1", "nsc 2");
        assert!(matches!(parse_mesh(&bad_header), Err(Error::Format { line: 1, .. })));
        let bad_dims = TET.replace("dim 3 ambient 3", "dim 4 ambient 3");
        assert!(matches!(parse_mesh(&bad_dims), Err(Error::DimensionMismatch(_))));
        let short_row = TET.replace("0 1 0\n", "0 1\n");
        assert!(matches!(parse_mesh(&short_row), Err(Error::Format { line: 6, .. })));
        let flat = TET.replace("0 0 1\n", "1 1 0\n");
        assert!(matches!(parse_mesh(&flat), Err(Error::DegenerateSimplex(0))));
        let repeated = TET.replace("1 2 3 4", "1 2 2 4");
        assert!(matches!(parse_mesh(&repeated), Err(Error::RepeatedVertex { .. })));
    }

    #[test]
    fn density_block() {
        let text = format!("{TET}density 1\n2.5\n");
        let m = parse_mesh(&text).unwrap();
        assert_eq!(m.density, Some(vec![2.5]));
        let bad = format!("{TET}density 1\n-1\n");
        assert!(matches!(parse_mesh(&bad), Err(Error::InvalidMass { .. })));
    }

    #[test]
    fn map_round_trip() {
        let map = PiecewiseAffineMap::new(3, vec![0.1, -0.2, 1.0 / 3.0, 1e-300, 2.0, -0.0]).unwrap();
        let text = format_map(&map);
        let back = parse_map(&text).unwrap();
        assert_eq!(back, map);
        assert_eq!(format_map(&back), text);
    }
}
