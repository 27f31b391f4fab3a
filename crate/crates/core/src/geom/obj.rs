//! Wavefront OBJ subset: `v` (optionally with trailing RGB), `vt`, and
//! triangular `f` records. Corners with distinct `(v, vt)` pairs become
//! distinct vertices so UVs stay per-vertex.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::TriMesh;
use crate::math::Vec3;

pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, &path.display().to_string())
}

pub fn parse_obj(text: &str, origin: &str) -> Result<TriMesh> {
    let err = |line: usize, message: String| Error::Obj { path: origin.to_string(), line, message };

    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut texcoords = Vec::new();
    let mut corners: Vec<[(usize, Option<usize>); 3]> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        let nums = |it: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
            it.map(|s| s.parse::<f64>().map_err(|_| err(line_no, format!("bad number `{s}`")))).collect()
        };
        match tag {
            "v" => {
                let v = nums(it)?;
                match v.len() {
                    3 | 4 => positions.push(Vec3::new(v[0], v[1], v[2])),
                    6 => {
                        positions.push(Vec3::new(v[0], v[1], v[2]));
                        colors.push(Vec3::new(v[3], v[4], v[5]));
                    }
                    n => return Err(err(line_no, format!("vertex record has {n} values"))),
                }
            }
            "vt" => {
                let v = nums(it)?;
                if v.len() < 2 {
                    return Err(err(line_no, "texture coordinate needs u and v".into()));
                }
                texcoords.push([v[0], v[1]]);
            }
            "f" => {
                let refs: Vec<&str> = it.collect();
                if refs.len() != 3 {
                    return Err(err(line_no, format!("only triangles are supported, face has {} vertices", refs.len())));
                }
                let mut face = [(0usize, None); 3];
                for (k, r) in refs.iter().enumerate() {
                    let mut parts = r.split('/');
                    let vi = resolve(parts.next().unwrap_or(""), positions.len())
                        .ok_or_else(|| err(line_no, format!("bad vertex reference `{r}`")))?;
                    let ti = match parts.next() {
                        Some("") | None => None,
                        Some(s) => Some(
                            resolve(s, texcoords.len())
                                .ok_or_else(|| err(line_no, format!("bad texture reference `{r}`")))?,
                        ),
                    };
                    face[k] = (vi, ti);
                }
                corners.push(face);
            }
            _ => {}
        }
    }

    if !colors.is_empty() && colors.len() != positions.len() {
        return Err(err(0, "vertex colors given for only some vertices".into()));
    }
    let with_uv = corners.iter().flatten().filter(|c| c.1.is_some()).count();
    if with_uv != 0 && with_uv != corners.len() * 3 {
        return Err(err(0, "texture coordinates given for only some face corners".into()));
    }

    // When every position carries a single texture coordinate the original
    // vertex order is kept; otherwise corners are split per (v, vt) pair.
    let mut single_uv: Vec<Option<usize>> = vec![None; positions.len()];
    let mut consistent = true;
    for &(vi, ti) in corners.iter().flatten() {
        if let Some(t) = ti {
            match single_uv[vi] {
                None => single_uv[vi] = Some(t),
                Some(prev) if texcoords[prev] == texcoords[t] => {}
                Some(_) => consistent = false,
            }
        }
    }

    let mesh = if consistent {
        let faces = corners.iter().map(|f| f.map(|(v, _)| v as u32)).collect();
        let mut mesh = TriMesh::new(positions, faces)?;
        if with_uv != 0 {
            let uvs = single_uv.iter().map(|t| t.map_or([0.0, 0.0], |t| texcoords[t])).collect();
            mesh = mesh.with_uvs(uvs)?;
        }
        if !colors.is_empty() {
            mesh = mesh.with_colors(colors)?;
        }
        mesh
    } else {
        let mut remap: HashMap<(usize, usize), u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut uvs = Vec::new();
        let mut vcolors = Vec::new();
        let mut faces = Vec::with_capacity(corners.len());
        for face in &corners {
            let mut out = [0u32; 3];
            for (k, &(vi, ti)) in face.iter().enumerate() {
                let ti = ti.expect("split path requires texture coordinates");
                out[k] = *remap.entry((vi, ti)).or_insert_with(|| {
                    vertices.push(positions[vi]);
                    uvs.push(texcoords[ti]);
                    if !colors.is_empty() {
                        vcolors.push(colors[vi]);
                    }
                    (vertices.len() - 1) as u32
                });
            }
            faces.push(out);
        }
        let mut mesh = TriMesh::new(vertices, faces)?.with_uvs(uvs)?;
        if !vcolors.is_empty() {
            mesh = mesh.with_colors(vcolors)?;
        }
        mesh
    };
    Ok(mesh)
}

fn resolve(s: &str, count: usize) -> Option<usize> {
    let i: i64 = s.parse().ok()?;
    let idx = if i > 0 { i - 1 } else { count as i64 + i };
    (idx >= 0 && (idx as usize) < count).then_some(idx as usize)
}

pub fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for (i, v) in mesh.vertices.iter().enumerate() {
        match &mesh.colors {
            Some(c) => {
                let c = c[i];
                writeln!(s, "v {:?} {:?} {:?} {:?} {:?} {:?}", v.x, v.y, v.z, c.x, c.y, c.z).unwrap()
            }
            None => writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z).unwrap(),
        }
    }
    if let Some(uvs) = &mesh.uvs {
        for uv in uvs {
            writeln!(s, "vt {:?} {:?}", uv[0], uv[1]).unwrap();
        }
    }
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| i + 1);
        if mesh.uvs.is_some() {
            writeln!(s, "f {a}/{a} {b}/{b} {c}/{c}").unwrap();
        } else {
            writeln!(s, "f {a} {b} {c}").unwrap();
        }
    }
    s
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    std::fs::write(path, obj_string(mesh)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_face_rejected_with_line() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n# quad\nf 1 2 3 4\n";
        match parse_obj(text, "quad.obj") {
            Err(Error::Obj { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected OBJ error, got {other:?}"),
        }
    }

    #[test]
    fn vt_indexing_splits_seams() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvt 1 1\nvt 0.5 0.5\n\
                    f 1/1 2/2 3/3\nf 2/5 4/4 3/3\n";
        let m = parse_obj(text, "t").unwrap();
        assert_eq!(m.vertex_count(), 5);
        assert_eq!(m.uvs.as_ref().unwrap()[3], [0.5, 0.5]);
        assert_eq!(m.vertices[3], m.vertices[1]);
    }

    #[test]
    fn roundtrip_preserves_mesh() {
        let m = crate::synth::uv_sphere(6, 8, 1.0);
        let back = parse_obj(&obj_string(&m), "rt").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn vertex_colors_and_slash_normals() {
        let text = "v 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 0 1 0 0 0 1\nvn 0 0 1\nf 1//1 2//1 3//1\n";
        let m = parse_obj(text, "c").unwrap();
        assert_eq!(m.colors.as_ref().unwrap()[1], Vec3::new(0.0, 1.0, 0.0));
        assert!(m.uvs.is_none());
    }
}
