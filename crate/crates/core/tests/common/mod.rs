pub mod equations;
