pub mod hungarian;
