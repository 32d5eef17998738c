use kinetic_brw_py::kinetic_brw_py;
use pyo3::prelude::*;

#[test]
fn module_round_trip() {
    pyo3::append_to_inittab!(kinetic_brw_py);
    pyo3::prepare_freethreaded_python();
    Python::with_gil(|py| {
        py.run_bound(
            r#"
import math
import kinetic_brw_py as kb

m = kb.WeightModel.power_uniform_split(2.0)
p = kb.SpectralProfile(m)
assert abs(p.theta_star - (1 + math.sqrt(2)) / 2) < 1e-8
assert abs(m.phi(1.0) - (2 / 3 - 1)) < 1e-12
assert p.classify(0.8)[0] == "subcritical"

law = kb.InitialLaw.point_mass(1.0)
dp = kb.WeightModel.deterministic_pair(0.5)
assert all(abs(u - 1.0) < 1e-12 for u in kb.sample_mu_t(dp, law, 2.0, 50, 1))

assert kb.ks_two_sample([0.0], [1.0])[0] == 1.0
try:
    kb.InitialLaw.symmetric_stable(2.5)
    raise AssertionError("alpha > 2 accepted")
except ValueError:
    pass
"#,
            None,
            None,
        )
        .unwrap();
    });
}
