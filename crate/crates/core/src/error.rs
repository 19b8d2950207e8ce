use crate::grid::ObjectId;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("shape leaves the grid bounds")]
    OutOfBounds,
    #[error("region is empty")]
    EmptyRegion,
    #[error("could not place all objects after {0} attempts")]
    PlacementFailure(usize),
    #[error("viewpoint position lies inside a wall or occupied voxel")]
    InvalidPose,
    #[error("no collision-free grasp for object {0}")]
    NoGraspFound(ObjectId),
    #[error("no collision-free path")]
    NoPath,
    #[error("start configuration is in collision")]
    InvalidStart,
    #[error("root arrangement is infeasible: {0}")]
    InfeasibleRoot(String),
    #[error("belief has no unobserved interior cells left")]
    NothingUnobserved,
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
