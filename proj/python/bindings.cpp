#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "conserve/commands.hpp"
#include "conserve/conservation.hpp"
#include "conserve/dataset.hpp"
#include "conserve/error.hpp"
#include "conserve/ops.hpp"
#include "conserve/pdegen.hpp"
#include "conserve/training.hpp"

namespace py = pybind11;
using namespace conserve;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Array stack(const std::vector<GridField>& fields, const Shape& item) {
    std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(fields.size())};
    shape.insert(shape.end(), item.begin(), item.end());
    Array out(shape);
    double* dst = out.mutable_data();
    for (const GridField& f : fields) dst = std::copy(f.data().begin(), f.data().end(), dst);
    return out;
}

py::dict split_to_dict(const DatasetSplit& d) {
    Shape item{d.spec.channels()};
    for (std::size_t n : d.spec.grid()) item.push_back(n);
    py::dict out;
    out["pde"] = pde_name(d.spec.pde);
    out["law"] = law_name(d.law);
    out["split"] = split_name(d.split);
    out["resolution"] = d.spec.resolution;
    out["seed"] = d.spec.seed;
    out["te_zero_samples"] = d.te_zero_samples;
    out["inputs"] = stack(d.inputs, item);
    out["targets"] = stack(d.targets, item);
    out["cons_targets"] = py::array_t<double>(static_cast<py::ssize_t>(d.cons_targets.size()), d.cons_targets.data());
    return out;
}

RunConfig config_from(const py::dict& values) {
    RunConfig cfg;
    for (const auto& [k, v] : values) cfg.set(py::str(k), py::str(v));
    return cfg;
}

std::string run(void (*cmd)(RunConfig, std::ostream&), const py::dict& values) {
    std::ostringstream out;
    cmd(config_from(values), out);
    return out.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Exact conservation correction for neural PDE surrogates";

    py::register_exception<DataError>(m, "DataError", PyExc_IOError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    m.def("quantity_linear", [](const Array& u) { return quantity_linear(to_tensor(u)); }, py::arg("u"),
          "Sum of all entries.");
    m.def("quantity_quadratic", [](const Array& u) { return quantity_quadratic(to_tensor(u)); }, py::arg("u"),
          "Sum of squares of all entries.");

    m.def(
        "linear_correct",
        [](const Array& u, const Array& a, double m0) {
            Tape t;
            return to_array(linear_correct(t.constant(to_tensor(u)),
                                           {t.constant(to_tensor(a)), CoefficientConstraint::SumToOne}, m0)
                                .value());
        },
        py::arg("u"), py::arg("a"), py::arg("m0"), "U + (m0 - sum U) A for coefficients A summing to one.");
    m.def(
        "quadratic_correct",
        [](const Array& u, const Array& a, double c0, double epsilon, bool exactness_pass) {
            ConservationLaw law;
            law.kind = LawKind::Quadratic;
            law.epsilon = epsilon;
            law.exactness_pass = exactness_pass;
            Tape t;
            return to_array(quadratic_correct(t.constant(to_tensor(u)),
                                              {t.constant(to_tensor(a)), CoefficientConstraint::Unconstrained}, c0, law)
                                .value());
        },
        py::arg("u"), py::arg("a"), py::arg("c0"), py::arg("epsilon") = 1e-12, py::arg("exactness_pass") = true,
        "lambda1 U + lambda2 A with sum of squares equal to c0.");
    m.def("project_linear", [](const Array& u, double m0) { return to_array(project_linear(to_tensor(u), m0)); },
          py::arg("u"), py::arg("m0"));
    m.def("project_quadratic", [](const Array& u, double c0) { return to_array(project_quadratic(to_tensor(u), c0)); },
          py::arg("u"), py::arg("c0"));
    m.def("relative_l2", [](const Array& p, const Array& g) { return relative_l2(to_tensor(p), to_tensor(g)); },
          py::arg("pred"), py::arg("truth"));

    m.def(
        "generate_split",
        [](const std::string& pde, const std::string& law, const std::string& split, std::size_t n,
           std::size_t resolution, std::uint64_t seed) {
            PdeSpec spec = PdeSpec::defaults(parse_pde(pde));
            if (resolution > 0) spec.resolution = resolution;
            spec.seed = seed;
            return split_to_dict(generate_split(spec, parse_law(law), parse_split(split), n));
        },
        py::arg("pde"), py::arg("law"), py::arg("split") = "train", py::arg("n") = 8, py::arg("resolution") = 0,
        py::arg("seed") = 0, "Generates (input, target, conserved value) samples in memory.");
    m.def("read_dataset", [](const std::filesystem::path& p) { return split_to_dict(read_dataset(p)); },
          py::arg("path"));

    m.def("gen", [](const py::dict& cfg) { return run(cmd_gen, cfg); }, py::arg("config"),
          "Runs the gen command with the given key/value config and returns its summary.");
    m.def("train", [](const py::dict& cfg) { return run(cmd_train, cfg); }, py::arg("config"));
    m.def("eval", [](const py::dict& cfg) { return run(cmd_eval, cfg); }, py::arg("config"));
    m.def("bench", [](const py::dict& cfg) { return run(cmd_bench, cfg); }, py::arg("config"));
    m.def("sweep", [](const py::dict& cfg) { return run(cmd_sweep, cfg); }, py::arg("config"));
    m.def("config_keys", &RunConfig::keys);
}
