use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TriMesh;
use crate::error::{Error, Result};
use crate::json;

/// On-disk JSON layout of a [`TriMesh`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub vertices: Vec<Vec<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_vertices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodic_map: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genus: Option<u32>,
}

impl From<&TriMesh> for MeshFile {
    fn from(mesh: &TriMesh) -> Self {
        MeshFile {
            vertices: mesh.vertices().iter().map(|v| v[..mesh.dim()].to_vec()).collect(),
            triangles: mesh.triangles().to_vec(),
            boundary_vertices: mesh.boundary_vertices().to_vec(),
            periodic_map: mesh.periodic_map().map(<[_]>::to_vec),
            genus: mesh.genus(),
        }
    }
}

impl TryFrom<MeshFile> for TriMesh {
    type Error = Error;

    fn try_from(file: MeshFile) -> Result<Self> {
        let dim = file.vertices.first().map_or(2, Vec::len);
        let mut vertices = Vec::with_capacity(file.vertices.len());
        for (i, v) in file.vertices.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::InvalidMesh(format!(
                    "vertex {i} has {} coordinates, expected {dim}",
                    v.len()
                )));
            }
            vertices.push([v[0], v[1], if dim == 3 { v[2] } else { 0.0 }]);
        }
        let mesh = TriMesh::new(dim, vertices, file.triangles, file.periodic_map, file.genus)?;
        let mut declared = file.boundary_vertices;
        declared.sort_unstable();
        if declared != mesh.boundary_vertices() {
            return Err(Error::InvalidMesh(
                "boundary_vertices does not match the endpoints of single-triangle edges".into(),
            ));
        }
        Ok(mesh)
    }
}

impl TriMesh {
    pub fn to_json(&self) -> Result<String> {
        Ok(json::to_string(&MeshFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MeshFile = serde_json::from_str(text)?;
        TriMesh::try_from(file)
    }
}

pub fn save(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, mesh.to_json()?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<TriMesh> {
    TriMesh::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::{disk_rings, icosphere, torus_grid};
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        for mesh in [
            disk_rings(1.0, 5).unwrap(),
            icosphere(1.3, 2).unwrap(),
            torus_grid(std::f64::consts::TAU, 1.7, 6, 4).unwrap(),
        ] {
            let back = TriMesh::from_json(&mesh.to_json().unwrap()).unwrap();
            assert_eq!(back, mesh);
            for (a, b) in mesh.vertices().iter().zip(back.vertices()) {
                for k in 0..3 {
                    assert_eq!(a[k].to_bits(), b[k].to_bits());
                }
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mesh = disk_rings(2.0, 3).unwrap();
        save(&mesh, &path).unwrap();
        assert_eq!(load(&path).unwrap(), mesh);
    }

    #[test]
    fn dangling_index_rejected() {
        let text = r#"{"vertices":[[0,0],[1,0],[0,1]],"triangles":[[0,1,3]],"boundary_vertices":[0,1,2]}"#;
        assert!(matches!(TriMesh::from_json(text), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn euler_violation_rejected() {
        let mut file = MeshFile::from(&icosphere(1.0, 0).unwrap());
        file.genus = Some(2);
        let text = serde_json::to_string(&file).unwrap();
        assert!(matches!(TriMesh::from_json(&text), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn wrong_boundary_rejected() {
        let text = r#"{"vertices":[[0,0],[1,0],[0,1]],"triangles":[[0,1,2]],"boundary_vertices":[0,1]}"#;
        assert!(TriMesh::from_json(text).is_err());
        assert!(TriMesh::from_json("{not json").is_err());
    }
}
