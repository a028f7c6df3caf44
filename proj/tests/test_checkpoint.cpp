#include "fixtures.hpp"

#include "knobrec/checkpoint.hpp"
#include "knobrec/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace knobrec;
using namespace knobrec::checkpoint;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("knobrec_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
}

ModelCheckpoint sample_checkpoint() {
    ModelCheckpoint c;
    c.params = fixture::toy_params(17, 6, 5, 3);
    // values that only survive an exact binary encoding
    c.params.tensor(model::ModelParams::decoder_b)(0, 0) = std::nextafter(1.0 / 3.0, 1.0);
    c.params.tensor(model::ModelParams::decoder_b)(0, 1) = std::numeric_limits<double>::denorm_min();
    c.params.tensor(model::ModelParams::decoder_b)(0, 2) = -0.0;
    c.loss.variant = model::Variant::tc_vae;
    c.loss.beta = 2.5;
    c.loss.alpha = 0.7;
    c.loss.supervision_fraction = 0.5;
    c.factor_names = {"Action", "Drama", "Sci-Fi"};
    c.knob_dims = {0, 1, 2};
    c.seed = 42;
    c.selected_epoch = 7;
    c.validation_ndcg = 0.3141592653589793;
    c.supervised_users = 123;
    c.training = {{"epochs", 10}, {"batch_size", 50}};
    return c;
}

} // namespace

TEST_CASE("model checkpoint round trip is bit exact") {
    TempDir dir("ckpt_roundtrip");
    const ModelCheckpoint c = sample_checkpoint();
    save_model(dir.path / "m.ckpt", c);
    CHECK_FALSE(fs::exists(dir.path / "m.ckpt.tmp"));
    const ModelCheckpoint d = load_model(dir.path / "m.ckpt");

    CHECK(d.params == c.params);
    CHECK(std::signbit(d.params.tensor(model::ModelParams::decoder_b)(0, 2)));
    CHECK(d.params.dims().n_items == 17);
    CHECK(d.loss.variant == model::Variant::tc_vae);
    CHECK(d.loss.beta == 2.5);
    CHECK(d.loss.alpha == 0.7);
    CHECK(d.factor_names == c.factor_names);
    CHECK(d.knob_dims == c.knob_dims);
    CHECK(d.seed == 42);
    CHECK(d.selected_epoch == 7);
    CHECK(d.validation_ndcg == c.validation_ndcg);
    CHECK(d.supervised_users == 123);
    CHECK(d.training == c.training);
    REQUIRE(d.mapping().has_value());
    CHECK(d.mapping()->dims() == c.knob_dims);

    // saving the loaded copy reproduces the file byte for byte
    save_model(dir.path / "again.ckpt", d);
    CHECK(slurp(dir.path / "m.ckpt") == slurp(dir.path / "again.ckpt"));
}

TEST_CASE("corrupt, truncated or mismatched files are rejected") {
    TempDir dir("ckpt_corrupt");
    save_model(dir.path / "m.ckpt", sample_checkpoint());
    const std::string bytes = slurp(dir.path / "m.ckpt");

    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    spit(dir.path / "bad.ckpt", flipped);
    CHECK_THROWS_WITH_AS(load_model(dir.path / "bad.ckpt"), doctest::Contains("checksum"), CheckpointError);

    spit(dir.path / "short.ckpt", bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(load_model(dir.path / "short.ckpt"), CheckpointError);

    std::string magic = bytes;
    magic[0] = 'X';
    spit(dir.path / "magic.ckpt", magic);
    CHECK_THROWS_AS(load_model(dir.path / "magic.ckpt"), CheckpointError);

    CHECK_THROWS_AS(load_model(dir.path / "missing.ckpt"), CheckpointError);
    CHECK_THROWS_AS(load_trainer_state(dir.path / "m.ckpt"), CheckpointError);
}

TEST_CASE("container: header, arrays and version") {
    const RealMatrix a = RealMatrix::from_rows({{1.5, -2.0}, {0.0, 1e-300}});
    const RealMatrix b(1, 3, 7.0);
    const std::string bytes = encode_container("model", {{"note", "x"}}, {{"a", &a}, {"b", &b}});
    CHECK(bytes.substr(0, 8) == "KNOBRECK");
    const Container c = decode_container(bytes, "model");
    CHECK(c.kind == "model");
    CHECK(c.header["note"] == "x");
    REQUIRE(c.arrays.size() == 2);
    CHECK(c.arrays[0] == a);
    CHECK(c.arrays[1] == b);
    CHECK_THROWS_AS(decode_container(bytes, "trainer_state"), CheckpointError);
    CHECK_THROWS_AS(decode_container(bytes + "z", "model"), CheckpointError);

    std::string v2 = bytes;
    v2[8] = 2;
    CHECK_THROWS_AS(decode_container(v2, "model"), CheckpointError);
}

TEST_CASE("trainer state round trip resumes identically") {
    TempDir dir("ckpt_state");
    data::SyntheticSpec spec;
    spec.n_users = 200;
    spec.n_items = 60;
    spec.min_interactions = 8;
    spec.max_interactions = 20;
    const data::SyntheticDataset syn = data::generate_synthetic(spec);
    const data::UserSplit split = data::split_users(syn.dataset, 20, 20, 0.2, 1);
    model::TrainConfig cfg;
    cfg.dims = {60, 16, 16, 5};
    cfg.loss.supervision_fraction = 0.5;
    cfg.epochs = 4;
    cfg.batch_size = 32;
    cfg.seed = 9;

    const model::FitResult straight = model::fit(syn.dataset, split, cfg);

    model::Trainer first(syn.dataset, split, cfg);
    first.run_epoch();
    const nlohmann::json fingerprint = {{"seed", 9}};
    save_trainer_state(dir.path / "state.ckpt", first.state(), fingerprint);

    nlohmann::json read_back;
    const model::TrainerState s = load_trainer_state(dir.path / "state.ckpt", &read_back);
    CHECK(read_back == fingerprint);
    CHECK(s.epochs_done == 1);
    CHECK(s.current == first.state().current);
    CHECK(s.optimizer.step == first.state().optimizer.step);

    model::Trainer second(syn.dataset, split, cfg);
    second.restore(s);
    while (!second.done()) second.run_epoch();
    CHECK(second.result().params == straight.params);
    CHECK(second.result().report.selected_epoch == straight.report.selected_epoch);
}
