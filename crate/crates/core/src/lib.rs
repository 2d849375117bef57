pub mod base_p;
pub mod dd;
pub mod dual;
pub mod error;
pub mod fwt;
pub mod net;
pub mod kernel;
pub mod spline;
pub mod anova;
pub mod param_opt;
pub mod test_functions;
pub mod pipeline;
pub mod io;
