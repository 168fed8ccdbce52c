mod diagnose;
mod fit;
mod verify;

pub use diagnose::diagnose;
pub use fit::fit;
pub use verify::verify;
