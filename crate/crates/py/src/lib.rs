//! Python bindings; see the crate root for the module definition.

use pyo3::prelude::*;

/// Placeholder module; filled in once the core crate lands.
#[pymodule]
fn sqzarr_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
