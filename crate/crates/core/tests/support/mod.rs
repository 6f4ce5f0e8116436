pub mod fd_oracle;
pub mod models;
