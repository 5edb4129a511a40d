pub mod emg;
pub mod esc;
pub mod human;
pub mod robot;
pub mod sim;
pub mod trajectory;
