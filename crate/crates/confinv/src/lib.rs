pub mod catalog;
pub mod jets;
pub mod shape;
pub mod tensor;
pub mod energies;
pub mod exterior;
pub mod noether;
pub mod identities;
