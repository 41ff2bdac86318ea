#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "autochain/config.hpp"
#include "autochain/crypto.hpp"
#include "autochain/ledger.hpp"
#include "autochain/report.hpp"
#include "autochain/world.hpp"

namespace py = pybind11;
using namespace autochain;

namespace {

template <class T>
py::bytes to_py(const T& fixed) {
  return py::bytes(reinterpret_cast<const char*>(fixed.bytes.data()), T::size);
}

template <class T>
T from_py(const py::bytes& b) {
  const std::string s = b;
  return T::from_bytes(as_bytes(s));
}

Bytes bytes_of(const py::bytes& b) {
  const std::string s = b;
  return Bytes(s.begin(), s.end());
}

py::bytes py_bytes(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

template <class T>
void fixed_property(py::class_<ledger::Transaction>& cls, const char* name, T ledger::Transaction::*member) {
  cls.def_property(
      name, [member](const ledger::Transaction& tx) { return to_py(tx.*member); },
      [member](ledger::Transaction& tx, const py::bytes& v) { tx.*member = from_py<T>(v); });
}

py::object json_to_py(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_autochain, m) {
  m.doc() = "Blockchain overlay for connected-vehicle security: ledger primitives and scenario runner";

  py::register_exception<config::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<report::TraceError>(m, "TraceError", PyExc_ValueError);
  py::register_exception<ledger::StructuralError>(m, "StructuralError", PyExc_ValueError);

  py::class_<crypto::KeyPair>(m, "KeyPair")
      .def_property_readonly("public_key", [](const crypto::KeyPair& k) { return to_py(k.public_key); })
      .def_property_readonly("secret_key", [](const crypto::KeyPair& k) { return to_py(k.secret_key); });

  m.def("generate_keypair", &crypto::generate_keypair, py::arg("seed"));
  m.def(
      "sign", [](const py::bytes& msg, const crypto::KeyPair& key) { return to_py(crypto::sign(bytes_of(msg), key.secret_key)); },
      py::arg("message"), py::arg("key"));
  m.def(
      "verify",
      [](const py::bytes& msg, const py::bytes& sig, const py::bytes& pk) {
        return crypto::verify(bytes_of(msg), from_py<crypto::Signature>(sig), from_py<crypto::PublicKey>(pk));
      },
      py::arg("message"), py::arg("signature"), py::arg("public_key"));
  m.def(
      "digest", [](const py::bytes& data) { return to_py(crypto::digest(bytes_of(data))); }, py::arg("data"));

  py::enum_<ledger::TxKind>(m, "TxKind")
      .value("SingleSig", ledger::TxKind::SingleSig)
      .value("Multisig", ledger::TxKind::Multisig);
  py::enum_<ledger::PayloadTag>(m, "PayloadTag")
      .value("StorageAnchor", ledger::PayloadTag::StorageAnchor)
      .value("BackupAnchor", ledger::PayloadTag::BackupAnchor)
      .value("SwUpdate", ledger::PayloadTag::SwUpdate)
      .value("InsuranceData", ledger::PayloadTag::InsuranceData)
      .value("Generic", ledger::PayloadTag::Generic);
  py::enum_<ledger::TxVerdict>(m, "TxVerdict")
      .value("Ok", ledger::TxVerdict::Ok)
      .value("BadSignature", ledger::TxVerdict::BadSignature)
      .value("MissingPredecessor", ledger::TxVerdict::MissingPredecessor)
      .value("Malformed", ledger::TxVerdict::Malformed);

  py::class_<ledger::Transaction> tx(m, "Transaction");
  tx.def_readwrite("kind", &ledger::Transaction::kind)
      .def_readwrite("payload_tag", &ledger::Transaction::payload_tag)
      .def_property_readonly("pending", &ledger::Transaction::is_pending)
      .def_property_readonly("pk_2",
                             [](const ledger::Transaction& t) -> py::object {
                               return t.pk_2 ? py::object(to_py(*t.pk_2)) : py::none();
                             })
      .def("compute_id", [](const ledger::Transaction& t) { return to_py(t.compute_id()); })
      .def("encode", [](const ledger::Transaction& t) { return py_bytes(t.encode()); })
      .def("__eq__", [](const ledger::Transaction& a, const ledger::Transaction& b) { return a == b; });
  fixed_property(tx, "t_id", &ledger::Transaction::t_id);
  fixed_property(tx, "p_t_id", &ledger::Transaction::p_t_id);
  fixed_property(tx, "pk_1", &ledger::Transaction::pk_1);
  fixed_property(tx, "sig_1", &ledger::Transaction::sig_1);
  fixed_property(tx, "payload_digest", &ledger::Transaction::payload_digest);

  m.def(
      "build_transaction",
      [](ledger::TxKind kind, const py::bytes& p_t_id, const py::bytes& payload_digest, ledger::PayloadTag tag,
         const crypto::KeyPair& generator, std::optional<py::bytes> recipient) {
        std::optional<crypto::PublicKey> r;
        if (recipient) r = from_py<crypto::PublicKey>(*recipient);
        return ledger::build_transaction(kind, from_py<crypto::Digest>(p_t_id), from_py<crypto::Digest>(payload_digest),
                                         tag, generator, r);
      },
      py::arg("kind"), py::arg("p_t_id"), py::arg("payload_digest"), py::arg("tag"), py::arg("generator"),
      py::arg("recipient") = py::none());
  m.def(
      "countersign",
      [](const ledger::Transaction& t, const crypto::KeyPair& recipient) {
        auto r = ledger::countersign(t, recipient);
        if (!r) throw py::value_error(std::string(ledger::to_string(r.error())));
        return *r;
      },
      py::arg("tx"), py::arg("recipient"));

  py::class_<ledger::Block>(m, "Block")
      .def_readonly("height", &ledger::Block::height)
      .def_readonly("transactions", &ledger::Block::transactions)
      .def_property_readonly("block_id", [](const ledger::Block& b) { return to_py(b.block_id); })
      .def_property_readonly("prev_block_hash", [](const ledger::Block& b) { return to_py(b.prev_block_hash); });

  py::class_<ledger::Chain>(m, "Chain")
      .def(py::init<>())
      .def_property_readonly("height", &ledger::Chain::height)
      .def_property_readonly("blocks", &ledger::Chain::blocks)
      .def_property_readonly("head_hash", [](const ledger::Chain& c) { return to_py(c.head_hash()); })
      .def("contains", [](const ledger::Chain& c, const py::bytes& id) { return c.contains(from_py<crypto::Digest>(id)); })
      .def("append",
           [](ledger::Chain& c, const ledger::Block& b) {
             auto r = c.append(b);
             if (!r) throw py::value_error(std::string(ledger::to_string(r.error())));
           })
      .def("encode", [](const ledger::Chain& c) { return py_bytes(c.encode()); })
      .def_static("decode", [](const py::bytes& data) { return ledger::Chain::decode(bytes_of(data)); })
      .def("dump", &ledger::Chain::dump);

  m.def("validate_transaction", &ledger::validate_transaction, py::arg("tx"), py::arg("chain"));
  m.def("verify_chain", &ledger::verify_chain, py::arg("chain"));
  m.def(
      "seal_block",
      [](std::vector<ledger::Transaction> txs, const crypto::KeyPair& generator, const ledger::Chain& chain) {
        return ledger::seal_block(std::move(txs), generator, chain);
      },
      py::arg("transactions"), py::arg("generator"), py::arg("chain"));

  py::class_<ledger::TrustParams>(m, "TrustParams")
      .def(py::init<>())
      .def(py::init([](double f_min, double k) { return ledger::TrustParams{f_min, k}; }), py::arg("f_min"), py::arg("k"))
      .def_readwrite("f_min", &ledger::TrustParams::f_min)
      .def_readwrite("k", &ledger::TrustParams::k);
  m.def("trust_from_streak", &ledger::trust_from_streak, py::arg("valid_streak"), py::arg("params"));
  m.def("verification_quota", &ledger::verification_quota, py::arg("block_len"), py::arg("trust_score"),
        py::arg("params"));

  py::class_<ledger::DtmState>(m, "DtmState")
      .def(py::init<>())
      .def_readwrite("block_period", &ledger::DtmState::block_period)
      .def_readwrite("block_size", &ledger::DtmState::block_size)
      .def_readwrite("utilization_low", &ledger::DtmState::utilization_low)
      .def_readwrite("utilization_high", &ledger::DtmState::utilization_high)
      .def_readwrite("period_min", &ledger::DtmState::period_min)
      .def_readwrite("period_max", &ledger::DtmState::period_max)
      .def_readwrite("observed_tx_rate", &ledger::DtmState::observed_tx_rate);
  m.def("utilization", &ledger::utilization, py::arg("dtm"), py::arg("observed_tx_rate"));
  m.def("dtm_adjust", &ledger::dtm_adjust, py::arg("dtm"), py::arg("observed_tx_rate"));

  m.def(
      "validate_config", [](const std::string& text) { return config::load_string(text).name; }, py::arg("text"),
      "Parses and validates scenario YAML; returns the scenario name.");
  m.def(
      "run_scenario",
      [](const std::string& text, std::optional<std::uint64_t> seed) {
        auto cfg = config::load_string(text);
        std::string trace;
        {
          py::gil_scoped_release release;
          trace = world::run_to_trace(std::move(cfg), seed);
        }
        return trace;
      },
      py::arg("text"), py::arg("seed") = py::none(), "Runs scenario YAML and returns the trace text.");
  m.def(
      "build_report", [](const std::string& trace) { return json_to_py(report::to_json(report::build_report(trace))); },
      py::arg("trace"), "Report dict recomputed from trace text.");
}
