use pyo3::prelude::*;

mod bindings;

#[pymodule]
fn _wfr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    bindings::register(m)
}
