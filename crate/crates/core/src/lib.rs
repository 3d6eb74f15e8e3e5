pub mod ammi;
pub mod cli;
pub mod ar;
pub mod error;
pub mod io;
pub mod model;
pub mod posterior;
pub mod sampler;
pub mod simulate;
pub mod tensor;
pub mod viz;
