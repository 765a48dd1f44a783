pub mod algebra;
pub mod fiber;
pub mod integral;
pub mod linalg;
pub mod measure;
pub mod operator;
pub mod poset;
pub mod scenario;
