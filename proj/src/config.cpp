#include "qh/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qh {

using nlohmann::json;

namespace {

VectorXd parse_vector(const json& v, int m, const char* name) {
    VectorXd out(m);
    if (v.is_number()) {
        out.setConstant(v.get<double>());
    } else if (v.is_array()) {
        if (static_cast<int>(v.size()) != m)
            throw std::invalid_argument(std::string("config: ") + name + " has wrong length");
        for (int i = 0; i < m; ++i) out(i) = v[i].get<double>();
    } else {
        throw std::invalid_argument(std::string("config: ") + name + " must be number or array");
    }
    return out;
}

json vector_to_json(const VectorXd& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

HestonParams params_from_json(const json& j) {
    const int m = j.value("m", 1);
    HestonParams p = HestonParams::reference(m);
    if (j.contains("A")) {
        const json& a = j["A"];
        if (a.is_string() && a.get<std::string>() == "identity") {
            p.A = MatrixXd::Identity(m, m);
        } else if (a.is_array()) {
            p.A.resize(m, m);
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < m; ++c) p.A(r, c) = a[r][c].get<double>();
        } else {
            throw std::invalid_argument("config: A must be \"identity\" or a matrix");
        }
    }
    if (j.contains("mu_bar")) p.mu_bar = parse_vector(j["mu_bar"], m, "mu_bar");
    if (j.contains("r_bar")) p.r_bar = parse_vector(j["r_bar"], m, "r_bar");
    if (j.contains("kappa")) p.kappa = parse_vector(j["kappa"], m, "kappa");
    if (j.contains("theta")) p.theta = parse_vector(j["theta"], m, "theta");
    if (j.contains("sigma")) p.sigma = parse_vector(j["sigma"], m, "sigma");
    if (j.contains("rho")) p.rho = parse_vector(j["rho"], m, "rho");
    if (j.contains("s0")) p.s0 = parse_vector(j["s0"], m, "s0");
    if (j.contains("y0_sq")) p.y0_sq = parse_vector(j["y0_sq"], m, "y0_sq");
    p.strike = j.value("strike", p.strike);
    p.maturity = j.value("maturity", p.maturity);
    return p;
}

json params_to_json(const HestonParams& p) {
    json j;
    j["m"] = p.m;
    if (p.is_diagonal_a() && (p.A.diagonal().array() == 1.0).all()) {
        j["A"] = "identity";
    } else {
        json a = json::array();
        for (int r = 0; r < p.m; ++r) {
            json row = json::array();
            for (int c = 0; c < p.m; ++c) row.push_back(p.A(r, c));
            a.push_back(row);
        }
        j["A"] = a;
    }
    j["mu_bar"] = vector_to_json(p.mu_bar);
    j["r_bar"] = vector_to_json(p.r_bar);
    j["kappa"] = vector_to_json(p.kappa);
    j["theta"] = vector_to_json(p.theta);
    j["sigma"] = vector_to_json(p.sigma);
    j["rho"] = vector_to_json(p.rho);
    j["s0"] = vector_to_json(p.s0);
    j["y0_sq"] = vector_to_json(p.y0_sq);
    j["strike"] = p.strike;
    j["maturity"] = p.maturity;
    return j;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_preset(const std::string& name) {
    ExperimentConfig cfg;
    cfg.preset = name;
    auto paper_scale = [&cfg](int m) {
        cfg.params = HestonParams::reference(m);
        cfg.solver.n_steps = 10;
        cfg.solver.iterations = 8000;
        cfg.solver.partial_iterations = 4000;
        cfg.solver.batch = 128;
        cfg.solver.eval_batch = 10000;
        cfg.mc.batch = 100000;
        cfg.mc.n_steps = 100;
    };
    if (name == "table1-m1") {
        paper_scale(1);
    } else if (name == "table1-m5") {
        paper_scale(5);
    } else if (name == "table1-m20") {
        paper_scale(20);
    } else if (name == "table1-m100") {
        paper_scale(100);
    } else if (name == "quick") {
        paper_scale(1);
        cfg.solver.iterations = 4000;
        cfg.solver.partial_iterations = 2000;
        cfg.mc.batch = 20000;
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    const json j = json::parse(text);
    ExperimentConfig cfg;
    if (j.contains("preset")) cfg = from_preset(j["preset"].get<std::string>());
    cfg.method = j.value("method", cfg.method);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("params")) cfg.params = params_from_json(j["params"]);
    if (j.contains("solver")) {
        const json& s = j["solver"];
        cfg.solver.n_steps = s.value("n_steps", cfg.solver.n_steps);
        cfg.solver.iterations = s.value("iterations", cfg.solver.iterations);
        cfg.solver.partial_iterations =
            s.value("partial_iterations", cfg.solver.partial_iterations);
        cfg.solver.lr1 = s.value("lr1", cfg.solver.lr1);
        cfg.solver.lr2 = s.value("lr2", cfg.solver.lr2);
        cfg.solver.batch = s.value("batch", cfg.solver.batch);
        cfg.solver.eval_batch = s.value("eval_batch", cfg.solver.eval_batch);
        cfg.solver.hidden = s.value("hidden", cfg.solver.hidden);
        cfg.solver.n_hidden_layers = s.value("n_hidden_layers", cfg.solver.n_hidden_layers);
    }
    if (j.contains("mc")) {
        const json& s = j["mc"];
        cfg.mc.batch = s.value("batch", cfg.mc.batch);
        cfg.mc.n_steps = s.value("n_steps", cfg.mc.n_steps);
        cfg.mc.antithetic = s.value("antithetic", cfg.mc.antithetic);
    }
    if (j.contains("pde")) {
        const json& s = j["pde"];
        cfg.pde.m_s = s.value("m_s", cfg.pde.m_s);
        cfg.pde.m_y = s.value("m_y", cfg.pde.m_y);
        cfg.pde.n_time = s.value("n_time", cfg.pde.n_time);
        cfg.pde.s_mult = s.value("s_mult", cfg.pde.s_mult);
        cfg.pde.y_max = s.value("y_max", cfg.pde.y_max);
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return from_json_text(ss.str());
}

std::string ExperimentConfig::to_json_text() const {
    json j;
    j["method"] = method;
    if (!preset.empty()) j["preset"] = preset;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["params"] = params_to_json(params);
    j["solver"] = {{"n_steps", solver.n_steps},
                   {"iterations", solver.iterations},
                   {"partial_iterations", solver.partial_iterations},
                   {"lr1", solver.lr1},
                   {"lr2", solver.lr2},
                   {"batch", solver.batch},
                   {"eval_batch", solver.eval_batch},
                   {"hidden", solver.hidden},
                   {"n_hidden_layers", solver.n_hidden_layers}};
    j["mc"] = {{"batch", mc.batch}, {"n_steps", mc.n_steps}, {"antithetic", mc.antithetic}};
    j["pde"] = {{"m_s", pde.m_s},
                {"m_y", pde.m_y},
                {"n_time", pde.n_time},
                {"s_mult", pde.s_mult},
                {"y_max", pde.y_max}};
    return j.dump(2);
}

}  // namespace qh
