#include "knobrec/checkpoint.hpp"

#include "knobrec/errors.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace knobrec::checkpoint {

namespace {

constexpr char kMagic[8] = {'K', 'N', 'O', 'B', 'R', 'E', 'C', 'K'};

template <class T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    }
    pos += sizeof(T);
    return value;
}

std::uint32_t crc32_of(const char* data, std::size_t size) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (size > 0) {
        const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<RealMatrix> take(std::vector<RealMatrix>& arrays, std::size_t& pos, std::size_t n) {
    if (pos + n > arrays.size()) throw CheckpointError("checkpoint has too few arrays");
    std::vector<RealMatrix> out(std::make_move_iterator(arrays.begin() + static_cast<std::ptrdiff_t>(pos)),
                                std::make_move_iterator(arrays.begin() + static_cast<std::ptrdiff_t>(pos + n)));
    pos += n;
    return out;
}

model::ModelParams params_from(const model::Dimensions& dims, model::Activation act, std::vector<RealMatrix> t) {
    try {
        return model::ModelParams(dims, act, std::move(t));
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("checkpoint tensors do not match header: ") + e.what());
    }
}

void add_params(std::vector<std::pair<std::string, const RealMatrix*>>& arrays, const std::string& prefix,
                const model::ModelParams& params) {
    for (std::size_t t = 0; t < params.tensors().size(); ++t) {
        arrays.emplace_back(prefix + model::ModelParams::tensor_name(t), &params.tensors()[t]);
    }
}

nlohmann::json terms_json(const model::LossTerms& t) {
    return {{"total", t.total},
            {"reconstruction", t.reconstruction},
            {"kl", t.kl},
            {"index_code_mi", t.index_code_mi},
            {"dimension_kl", t.dimension_kl},
            {"total_correlation", t.total_correlation},
            {"supervision", t.supervision},
            {"beta_t", t.beta_t}};
}

model::LossTerms terms_from(const nlohmann::json& j) {
    model::LossTerms t;
    t.total = j.at("total");
    t.reconstruction = j.at("reconstruction");
    t.kl = j.at("kl");
    t.index_code_mi = j.at("index_code_mi");
    t.dimension_kl = j.at("dimension_kl");
    t.total_correlation = j.at("total_correlation");
    t.supervision = j.at("supervision");
    t.beta_t = j.at("beta_t");
    return t;
}

} // namespace

std::string encode_container(const std::string& kind, const nlohmann::json& header,
                             const std::vector<std::pair<std::string, const RealMatrix*>>& arrays) {
    nlohmann::json full = header;
    full["kind"] = kind;
    nlohmann::json layout = nlohmann::json::array();
    for (const auto& [name, m] : arrays) layout.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
    full["arrays"] = layout;
    const std::string text = full.dump();

    std::string out(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(out, kFormatVersion);
    put_le<std::uint64_t>(out, text.size());
    out += text;
    for (const auto& entry : arrays) {
        for (double v : entry.second->values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    put_le<std::uint32_t>(out, crc32_of(out.data(), out.size()));
    return out;
}

Container decode_container(const std::string& bytes, const std::string& expected_kind) {
    if (bytes.size() < sizeof kMagic + 4 + 8 + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw CheckpointError("not a checkpoint file (bad magic)");
    }
    std::size_t tail = bytes.size() - 4;
    const std::uint32_t stored = get_le<std::uint32_t>(bytes, tail);
    if (stored != crc32_of(bytes.data(), bytes.size() - 4)) throw CheckpointError("checkpoint checksum mismatch");

    std::size_t pos = sizeof kMagic;
    const std::uint32_t version = get_le<std::uint32_t>(bytes, pos);
    if (version != kFormatVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t header_len = get_le<std::uint64_t>(bytes, pos);
    if (header_len > bytes.size() - 4 - pos) throw CheckpointError("checkpoint header truncated");

    Container c;
    try {
        c.header = nlohmann::json::parse(bytes.substr(pos, header_len));
        pos += header_len;
        c.kind = c.header.at("kind").get<std::string>();
        if (c.kind != expected_kind) throw CheckpointError("expected a " + expected_kind + " checkpoint, got " + c.kind);
        for (const auto& a : c.header.at("arrays")) {
            RealMatrix m(a.at("rows").get<std::size_t>(), a.at("cols").get<std::size_t>());
            if (m.values().size() > (bytes.size() - 4 - pos) / 8) throw CheckpointError("checkpoint arrays truncated");
            for (double& v : m.values()) v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
            c.arrays.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    }
    if (pos != bytes.size() - 4) throw CheckpointError("checkpoint has trailing bytes");
    return c;
}

nlohmann::json to_json(const model::LossConfig& loss) {
    return {{"variant", model::to_string(loss.variant)},
            {"beta", loss.beta},
            {"alpha", loss.alpha},
            {"gamma", loss.gamma},
            {"gamma_ss", loss.gamma_ss},
            {"supervision_fraction", loss.supervision_fraction},
            {"anneal_steps", loss.anneal_steps}};
}

model::LossConfig loss_from_json(const nlohmann::json& j) {
    model::LossConfig loss;
    loss.variant = model::parse_variant(j.at("variant").get<std::string>());
    loss.beta = j.at("beta");
    loss.alpha = j.at("alpha");
    loss.gamma = j.at("gamma");
    loss.gamma_ss = j.at("gamma_ss");
    loss.supervision_fraction = j.at("supervision_fraction");
    loss.anneal_steps = j.at("anneal_steps");
    return loss;
}

nlohmann::json to_json(const model::Dimensions& dims) {
    return {{"n_items", dims.n_items}, {"hidden1", dims.hidden1}, {"hidden2", dims.hidden2}, {"latent", dims.latent}};
}

model::Dimensions dims_from_json(const nlohmann::json& j) {
    model::Dimensions d;
    d.n_items = j.at("n_items");
    d.hidden1 = j.at("hidden1");
    d.hidden2 = j.at("hidden2");
    d.latent = j.at("latent");
    return d;
}

std::optional<control::KnobMapping> ModelCheckpoint::mapping() const {
    if (knob_dims.empty()) return std::nullopt;
    return control::KnobMapping(knob_dims, params.dims().latent);
}

void save_model(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
    nlohmann::json header;
    header["dimensions"] = to_json(ckpt.params.dims());
    header["activation"] = model::to_string(ckpt.params.activation());
    header["loss"] = to_json(ckpt.loss);
    header["factor_names"] = ckpt.factor_names;
    header["knob_dims"] = ckpt.knob_dims;
    header["seed"] = ckpt.seed;
    header["selected_epoch"] = ckpt.selected_epoch;
    header["validation_ndcg"] = ckpt.validation_ndcg;
    header["supervised_users"] = ckpt.supervised_users;
    header["training"] = ckpt.training;

    std::vector<std::pair<std::string, const RealMatrix*>> arrays;
    add_params(arrays, "", ckpt.params);
    write_file(path, encode_container("model", header, arrays));
}

ModelCheckpoint load_model(const std::filesystem::path& path) {
    Container c = decode_container(read_file(path), "model");
    ModelCheckpoint ckpt;
    try {
        const auto& h = c.header;
        const model::Dimensions dims = dims_from_json(h.at("dimensions"));
        const model::Activation act = model::parse_activation(h.at("activation").get<std::string>());
        std::size_t pos = 0;
        ckpt.params = params_from(dims, act, take(c.arrays, pos, model::ModelParams::tensor_count));
        ckpt.loss = loss_from_json(h.at("loss"));
        ckpt.factor_names = h.at("factor_names").get<std::vector<std::string>>();
        ckpt.knob_dims = h.at("knob_dims").get<std::vector<std::size_t>>();
        ckpt.seed = h.at("seed");
        ckpt.selected_epoch = h.at("selected_epoch");
        ckpt.validation_ndcg = h.at("validation_ndcg");
        ckpt.supervised_users = h.at("supervised_users");
        ckpt.training = h.at("training");
        if (!ckpt.knob_dims.empty()) (void)ckpt.mapping();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
    }
    return ckpt;
}

void save_trainer_state(const std::filesystem::path& path, const model::TrainerState& s,
                        const nlohmann::json& config) {
    nlohmann::json header;
    header["config"] = config;
    header["dimensions"] = to_json(s.current.dims());
    header["activation"] = model::to_string(s.current.activation());
    header["epochs_done"] = s.epochs_done;
    header["step"] = s.step;
    header["shuffle_rng"] = s.shuffle_rng;
    header["noise_rng"] = s.noise_rng;
    header["normal_state"] = s.normal_state;
    header["optimizer"] = {{"learning_rate", s.optimizer.config.learning_rate},
                           {"beta1", s.optimizer.config.beta1},
                           {"beta2", s.optimizer.config.beta2},
                           {"epsilon", s.optimizer.config.epsilon},
                           {"step", s.optimizer.step}};
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : s.report.epochs) {
        epochs.push_back({{"epoch", e.epoch}, {"terms", terms_json(e.mean_terms)}, {"validation_ndcg", e.validation_ndcg}});
    }
    header["report"] = {{"epochs", epochs},
                        {"selected_epoch", s.report.selected_epoch},
                        {"selected_ndcg", s.report.selected_ndcg},
                        {"supervised_users", s.report.supervised_users}};

    std::vector<std::pair<std::string, const RealMatrix*>> arrays;
    add_params(arrays, "current.", s.current);
    add_params(arrays, "best.", s.best);
    for (std::size_t i = 0; i < s.optimizer.first_moment.size(); ++i) {
        arrays.emplace_back("adam_m." + std::to_string(i), &s.optimizer.first_moment[i]);
    }
    for (std::size_t i = 0; i < s.optimizer.second_moment.size(); ++i) {
        arrays.emplace_back("adam_v." + std::to_string(i), &s.optimizer.second_moment[i]);
    }
    write_file(path, encode_container("trainer_state", header, arrays));
}

model::TrainerState load_trainer_state(const std::filesystem::path& path, nlohmann::json* config) {
    Container c = decode_container(read_file(path), "trainer_state");
    model::TrainerState s;
    try {
        const auto& h = c.header;
        const model::Dimensions dims = dims_from_json(h.at("dimensions"));
        const model::Activation act = model::parse_activation(h.at("activation").get<std::string>());
        const std::size_t n = model::ModelParams::tensor_count;
        std::size_t pos = 0;
        s.current = params_from(dims, act, take(c.arrays, pos, n));
        s.best = params_from(dims, act, take(c.arrays, pos, n));
        s.optimizer.first_moment = take(c.arrays, pos, n);
        s.optimizer.second_moment = take(c.arrays, pos, n);
        if (pos != c.arrays.size()) throw CheckpointError("trainer state has unexpected arrays");
        const auto& o = h.at("optimizer");
        s.optimizer.config.learning_rate = o.at("learning_rate");
        s.optimizer.config.beta1 = o.at("beta1");
        s.optimizer.config.beta2 = o.at("beta2");
        s.optimizer.config.epsilon = o.at("epsilon");
        s.optimizer.step = o.at("step");
        s.epochs_done = h.at("epochs_done");
        s.step = h.at("step");
        s.shuffle_rng = h.at("shuffle_rng");
        s.noise_rng = h.at("noise_rng");
        s.normal_state = h.at("normal_state");
        const auto& r = h.at("report");
        for (const auto& e : r.at("epochs")) {
            model::EpochRecord rec;
            rec.epoch = e.at("epoch");
            rec.mean_terms = terms_from(e.at("terms"));
            rec.validation_ndcg = e.at("validation_ndcg");
            s.report.epochs.push_back(rec);
        }
        s.report.selected_epoch = r.at("selected_epoch");
        s.report.selected_ndcg = r.at("selected_ndcg");
        s.report.supervised_users = r.at("supervised_users");
        if (config) *config = h.at("config");
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed trainer state: ") + e.what());
    }
    return s;
}

} // namespace knobrec::checkpoint
