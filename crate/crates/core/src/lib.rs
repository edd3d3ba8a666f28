//! Transverse ("drumhead") normal modes of planar ion crystals in a Penning
//! trap, spin-dependent optical-dipole-force lineshapes, and mode-resolved
//! thermometry.

pub mod constants;
pub mod crystal;
pub mod dynamics;
pub mod modes;
pub mod odf;
pub mod thermometry;
pub mod io;
