//! Plain-text correspondence files and point clouds (XYZ, ASCII PLY).
//!
//! Correspondence files hold one pair per line as six whitespace-separated
//! numbers `px py pz qx qy qz`. Blank lines and lines starting with `#` are
//! skipped. Values are written with Rust's shortest round-trip formatting,
//! so a save/load cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::pipeline::{Correspondence, CorrespondenceSet};

fn parse_floats(path: &Path, line_no: usize, tokens: &[&str]) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| {
            let v: f64 = t
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("invalid number `{t}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(path, line_no, format!("non-finite value `{t}`")))
            }
        })
        .collect()
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then_some((i + 1, l))
    })
}

pub fn parse_correspondences(text: &str, path: &Path) -> Result<CorrespondenceSet> {
    let mut pairs = Vec::new();
    for (line_no, line) in data_lines(text) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 6 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 6 values, found {}", tokens.len()),
            ));
        }
        let v = parse_floats(path, line_no, &tokens)?;
        pairs.push(Correspondence {
            p: Vec3::new(v[0], v[1], v[2]),
            q: Vec3::new(v[3], v[4], v[5]),
        });
    }
    Ok(CorrespondenceSet::new(pairs))
}

pub fn load_correspondences(path: impl AsRef<Path>) -> Result<CorrespondenceSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_correspondences(&text, path)
}

pub fn format_correspondences(set: &CorrespondenceSet) -> String {
    let mut out = String::from("# px py pz qx qy qz\n");
    for c in set.iter() {
        let _ = writeln!(out, "{} {} {} {} {} {}", c.p.x, c.p.y, c.p.z, c.q.x, c.q.y, c.q.z);
    }
    out
}

pub fn save_correspondences(path: impl AsRef<Path>, set: &CorrespondenceSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_correspondences(set)).map_err(|e| Error::io(path, e))
}

pub fn save_cloud(path: impl AsRef<Path>, points: &[Vec3]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for p in points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an XYZ (`.xyz`, `.txt`, `.pts`) or ASCII PLY (`.ply`) cloud.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<Vec<Vec3>> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "xyz" | "txt" | "pts" => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_xyz(&text, path)
        }
        "ply" => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_ply(&bytes, path)
        }
        _ => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            msg: format!("unknown extension `{ext}`"),
        }),
    }
}

/// One point per line; columns after the third (normals, colors) are ignored.
pub fn parse_xyz(text: &str, path: &Path) -> Result<Vec<Vec3>> {
    data_lines(text)
        .map(|(line_no, line)| {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() < 3 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected 3 coordinates, found {}", tokens.len()),
                ));
            }
            let v = parse_floats(path, line_no, &tokens[..3])?;
            Ok(Vec3::new(v[0], v[1], v[2]))
        })
        .collect()
}

#[derive(Debug)]
enum Property {
    Scalar(String),
    List,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Parses the vertex positions of an ASCII PLY file.
pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<Vec<Vec3>> {
    let unsupported = |msg: &str| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    // the header is ASCII even in binary files; decode only what we need
    let header_end = find_subslice(bytes, b"end_header").ok_or_else(|| Error::parse(path, 1, "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| Error::parse(path, 1, "header is not text"))?;

    let mut lines = header.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(Error::parse(path, 1, "missing `ply` magic")),
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut ascii = false;
    for (i, raw) in lines {
        let line_no = i + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        match tokens.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => ascii = true,
            ["format", fmt, _] if fmt.starts_with("binary") => {
                return Err(unsupported(&format!("{fmt} PLY is not supported, convert to ascii")));
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(path, line_no, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", _, _, _] => elements
                .last_mut()
                .ok_or_else(|| Error::parse(path, line_no, "property before element"))?
                .properties
                .push(Property::List),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| Error::parse(path, line_no, "property before element"))?
                .properties
                .push(Property::Scalar(name.to_string())),
            _ => return Err(Error::parse(path, line_no, format!("unrecognized header line `{}`", raw.trim()))),
        }
    }
    if !ascii {
        return Err(Error::parse(path, 2, "missing or unknown `format` line"));
    }

    let body_start = header_end + "end_header".len();
    let body = std::str::from_utf8(&bytes[body_start..]).map_err(|_| Error::parse(path, 1, "body is not text"))?;
    let header_lines = header.lines().count() + 1;
    let mut rows = body
        .lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (header_lines + i, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let mut points = Vec::new();
    for element in &elements {
        let is_vertex = element.name == "vertex";
        let col = |axis: &str| {
            element
                .properties
                .iter()
                .position(|p| matches!(p, Property::Scalar(n) if n == axis))
        };
        let (xi, yi, zi) = if is_vertex {
            match (col("x"), col("y"), col("z")) {
                (Some(x), Some(y), Some(z)) => (x, y, z),
                _ => return Err(Error::parse(path, 1, "vertex element lacks x/y/z properties")),
            }
        } else {
            (0, 0, 0)
        };
        for _ in 0..element.count {
            let (line_no, line) = rows
                .next()
                .ok_or_else(|| Error::parse(path, header_lines, format!("truncated `{}` data", element.name)))?;
            if !is_vertex {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let mut values = Vec::with_capacity(element.properties.len());
            let mut pos = 0usize;
            for prop in &element.properties {
                match prop {
                    Property::Scalar(_) => {
                        let tok = tokens
                            .get(pos)
                            .ok_or_else(|| Error::parse(path, line_no, "too few values in vertex row"))?;
                        values.push(*tok);
                        pos += 1;
                    }
                    Property::List => {
                        let len: usize = tokens
                            .get(pos)
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| Error::parse(path, line_no, "bad list length"))?;
                        values.push("0");
                        pos += 1 + len;
                    }
                }
            }
            let v = parse_floats(path, line_no, &[values[xi], values[yi], values[zi]])?;
            points.push(Vec3::new(v[0], v[1], v[2]));
        }
        if is_vertex {
            break;
        }
    }
    Ok(points)
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("mem.txt")
    }

    #[test]
    fn single_pair() {
        let set = parse_correspondences("1 2 3 4 5 6\n", &p()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.pairs()[0].p, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(set.pairs()[0].q, Vec3::new(4.0, 5.0, 6.0));
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let text = "# header\n\n1 2 3 4 5 6\n   \n# mid\n-1 -2 -3 -4 -5 -6e-3\n";
        let set = parse_correspondences(text, &p()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.pairs()[1].q.z, -6e-3);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_correspondences("1 2 3 4 5 6\n1 2 3 4 5\n", &p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_correspondences("# c\n1 2 3 4 5 x\n", &p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_correspondences("1 2 3 4 5 nan\n", &p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn xyz_three_points() {
        let pts = parse_xyz("0 0 0\n1 2 3\n-1 0.5 2e2\n", &p()).unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[2], Vec3::new(-1.0, 0.5, 200.0));
    }

    #[test]
    fn minimal_ascii_ply() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 1 2 255\n3 4 5 0\n3 0 1 1\n";
        let pts = parse_ply(text.as_bytes(), &p()).unwrap();
        assert_eq!(pts, vec![Vec3::new(0.0, 1.0, 2.0), Vec3::new(3.0, 4.0, 5.0)]);
    }

    #[test]
    fn ply_with_reordered_properties_and_leading_element() {
        let text = "ply\nformat ascii 1.0\nelement camera 1\nproperty float fx\nelement vertex 1\nproperty float nx\nproperty double z\nproperty double y\nproperty double x\nend_header\n500\n9 3 2 1\n";
        let pts = parse_ply(text.as_bytes(), &p()).unwrap();
        assert_eq!(pts, vec![Vec3::new(1.0, 2.0, 3.0)]);
    }

    #[test]
    fn binary_ply_is_unsupported() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n".to_vec();
        bytes.extend_from_slice(&[0u8, 0, 128, 63, 0, 0, 0, 64, 0, 0, 64, 64]);
        let err = parse_ply(&bytes, &p()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat { .. }), "{err}");
    }

    #[test]
    fn truncated_ply_is_error() {
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        assert!(matches!(parse_ply(text.as_bytes(), &p()), Err(Error::Parse { .. })));
        assert!(parse_ply(b"not a ply", &p()).is_err());
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.xyz");
        let pts = vec![Vec3::new(0.1, -2.5e-7, 1e10), Vec3::new(1.0 / 3.0, 2.0, 3.0)];
        save_cloud(&path, &pts).unwrap();
        assert_eq!(load_cloud(&path).unwrap(), pts);

        assert!(matches!(load_cloud(dir.path().join("x.obj")), Err(Error::UnsupportedFormat { .. })));
        assert!(matches!(load_cloud(dir.path().join("missing.xyz")), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn correspondence_text_round_trip(values in prop::collection::vec(proptest::array::uniform6(-1e6..1e6f64), 0..20)) {
            let set: CorrespondenceSet = values
                .iter()
                .map(|v| Correspondence { p: Vec3::new(v[0], v[1], v[2]), q: Vec3::new(v[3], v[4], v[5]) })
                .collect();
            let back = parse_correspondences(&format_correspondences(&set), &p()).unwrap();
            prop_assert_eq!(back, set);
        }
    }
}
