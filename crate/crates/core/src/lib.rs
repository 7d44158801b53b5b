pub mod poly;
pub mod combinat;
pub mod thorn;
pub mod tracker;
pub mod nets;
pub mod fuchs;
pub mod electro;
