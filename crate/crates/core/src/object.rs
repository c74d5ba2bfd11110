use crate::geom::{mass_properties, Bvh, MassProperties, MeshError, TriangleMesh};

/// A graspable object: surface mesh, mass properties and friction.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub id: String,
    pub mesh: TriangleMesh,
    pub bvh: Bvh,
    pub mass: MassProperties,
    /// Coulomb friction coefficient γ.
    pub friction: f64,
    /// Largest vertex distance from the centroid.
    pub bounding_radius: f64,
}

impl ObjectModel {
    pub fn new(id: impl Into<String>, mesh: TriangleMesh, density: f64, friction: f64) -> Result<Self, MeshError> {
        let mass = mass_properties(&mesh, density)?;
        let bounding_radius = mesh.bounding_radius(&mass.centroid);
        Ok(ObjectModel {
            id: id.into(),
            bvh: Bvh::build(&mesh),
            mesh,
            mass,
            friction,
            bounding_radius,
        })
    }
}
