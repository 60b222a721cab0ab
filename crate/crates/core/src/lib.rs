pub mod compensator;
pub mod linear;
pub mod lyapunov;
pub mod sdp;
pub mod sim;
pub mod so3;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/attitude-errors.md")]
    mod attitude_errors {}
    #[doc = include_str!("../../../book/src/compensators.md")]
    mod compensators {}
    #[doc = include_str!("../../../book/src/certification.md")]
    mod certification {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/linear-analysis.md")]
    mod linear_analysis {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
