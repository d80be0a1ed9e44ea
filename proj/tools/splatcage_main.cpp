#include "splatcage/cage_builder.hpp"
#include "splatcage/deform.hpp"
#include "splatcage/mesh_io.hpp"
#include "splatcage/metrics.hpp"
#include "splatcage/parallel.hpp"
#include "splatcage/ply_io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace splatcage;

std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(10);
    ss << v;
    return ss.str();
}

void require_readable(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw Error("input file does not exist: '" + path.string() + "'");
}

struct CommonOptions {
    int threads = hardware_threads();
    std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--threads", opts.threads, "worker threads (1 = sequential reference path)")
        ->envname("GSD_THREADS")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", opts.seed, "seed for the sampling steps");
}

ReportFields cage_metrics_fields(const CageMesh& cage, const std::vector<Vec3>& means) {
    const CageQuality q = evaluate_cage_quality(cage, means);
    return {
        {"components", std::to_string(q.components)},
        {"self_intersections", std::to_string(q.self_intersections)},
        {"closed", q.closed ? "true" : "false"},
        {"enclosure_fraction", format_double(q.enclosure_fraction)},
        {"vertices", std::to_string(cage.vertex_count())},
        {"faces", std::to_string(cage.face_count())},
    };
}

int run_build_cage(const std::filesystem::path& input, const std::filesystem::path& output,
                   const CageBuildConfig& cfg, const std::filesystem::path& report_path,
                   const std::filesystem::path& json_path,
                   const std::filesystem::path& debug_dir) {
    require_readable(input);
    const GaussianScene scene = load_gaussian_ply(input);

    CageBuildReport rep;
    const CageMesh cage = build_cage(scene, cfg, &rep, debug_dir);
    save_mesh(output, cage);

    std::vector<Vec3> means;
    for (const Gaussian& g : scene.gaussians)
        if (g.opacity() >= cfg.opacity_cutoff) means.push_back(g.mean);

    ReportFields fields = cage_metrics_fields(cage, means);
    fields.emplace_back("cameras", std::to_string(rep.cameras));
    fields.emplace_back("raw_vertices", std::to_string(rep.raw_vertices));
    fields.emplace_back("collapses", std::to_string(rep.decimate.collapses));
    fields.emplace_back("reached_target", rep.decimate.reached_target ? "true" : "false");
    fields.emplace_back("render_ms", format_double(rep.render_ms));
    fields.emplace_back("tsdf_ms", format_double(rep.tsdf_ms));
    fields.emplace_back("carve_ms", format_double(rep.carve_ms));
    fields.emplace_back("close_ms", format_double(rep.close_ms));
    fields.emplace_back("mesh_ms", format_double(rep.mesh_ms));
    fields.emplace_back("decimate_ms", format_double(rep.decimate_ms));

    for (const auto& [key, value] : fields) std::cout << key << "=" << value << "\n";
    if (!report_path.empty()) write_report_text(report_path, fields);
    if (!json_path.empty()) write_report_json(json_path, fields);
    if (!rep.decimate.reached_target)
        std::cerr << "warning: target vertex count not reached without breaking the cage\n";
    return 0;
}

int run_deform(const std::filesystem::path& scene_path, const std::filesystem::path& cage_s_path,
               const std::filesystem::path& cage_d_path, const std::filesystem::path& output,
               const DeformConfig& cfg, const std::filesystem::path& cache_path, bool report) {
    require_readable(scene_path);
    require_readable(cage_s_path);
    require_readable(cage_d_path);
    const GaussianScene scene = load_gaussian_ply(scene_path);
    const CageMesh cage_s = load_mesh(cage_s_path);
    const CageMesh cage_d = load_mesh(cage_d_path);

    DeformCache cache;
    const DeformCache* cache_ptr = nullptr;
    double cache_ms = 0;
    if (!cache_path.empty()) {
        const auto t0 = std::chrono::steady_clock::now();
        bool loaded = false;
        if (std::filesystem::exists(cache_path)) {
            try {
                cache = DeformCache::load(cache_path);
                loaded = true;
            } catch (const Error&) {
                loaded = false; // unreadable cache is rebuilt below
            }
        }
        if (!loaded) {
            cache = precompute_cache(scene, cage_s, cfg);
            cache.save(cache_path);
        }
        cache_ptr = &cache;
        cache_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             t0)
                       .count();
    }

    DeformStats stats;
    const GaussianScene out = deform_scene(scene, cage_s, cage_d, cfg, cache_ptr, &stats);
    save_gaussian_ply(output, out);

    if (report) {
        std::cout << "preprocess_ms=" << format_double(cache_ptr ? cache_ms : stats.preprocess_ms)
                  << "\n";
        std::cout << "deform_ms=" << format_double(stats.deform_ms) << "\n";
        std::cout << "splits=" << stats.splits << "\n";
        std::cout << "admitted=" << stats.admitted << "\n";
        std::cout << "output_gaussians=" << out.size() << "\n";
    }
    return 0;
}

int run_metrics(const std::filesystem::path& mesh_path, const std::filesystem::path& scene_path,
                int sample_count, std::uint64_t seed, int threads,
                const std::filesystem::path& report_path,
                const std::filesystem::path& json_path) {
    require_readable(mesh_path);
    const CageMesh mesh = load_mesh(mesh_path);

    std::vector<Vec3> samples;
    ReportFields fields;
    if (!scene_path.empty()) {
        require_readable(scene_path);
        const GaussianScene scene = load_gaussian_ply(scene_path);
        samples = surface_samples(scene, 0.5, sample_count, seed);
    }
    fields = cage_metrics_fields(mesh, samples);
    if (!samples.empty()) {
        const MvcStats mvc = negative_mvc_stats(samples, mesh, threads);
        fields.emplace_back("mvc_negative_entry_fraction",
                            format_double(mvc.negative_entry_fraction));
        fields.emplace_back("mvc_worst_negative", format_double(mvc.worst_negative));
        fields.emplace_back("mvc_sample_count", std::to_string(mvc.sample_count));
    }
    for (const auto& [key, value] : fields) std::cout << key << "=" << value << "\n";
    if (!report_path.empty()) write_report_text(report_path, fields);
    if (!json_path.empty()) write_report_json(json_path, fields);
    return 0;
}

int run_convert(const std::filesystem::path& input, const std::filesystem::path& output) {
    require_readable(input);
    PlyLoadOptions opts;
    opts.allow_two_scales = true;
    const GaussianScene scene = load_gaussian_ply(input, opts);
    save_gaussian_ply(output, convert_2dgs_scene(scene));
    return 0;
}

} // namespace

namespace {

// Flat key=value config file, expanded into --key=value tokens right after
// the subcommand so explicit command-line flags take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& in) {
    std::vector<std::string> args;
    std::filesystem::path config_file;
    for (std::size_t i = 0; i < in.size(); ++i) {
        const std::string& a = in[i];
        if (a == "--config") {
            if (i + 1 >= in.size()) throw Error("--config needs a file argument");
            config_file = in[++i];
        } else if (a.rfind("--config=", 0) == 0) {
            config_file = a.substr(9);
        } else {
            args.push_back(a);
        }
    }
    if (config_file.empty()) return args;
    std::ifstream cfg(config_file);
    if (!cfg) throw Error("cannot open config file '" + config_file.string() + "'");
    std::vector<std::string> extra;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(cfg, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        const std::size_t eq = line.find('=', start);
        if (eq == std::string::npos)
            throw Error("config file '" + config_file.string() + "' line " +
                        std::to_string(line_no) + ": expected key=value");
        std::string key = line.substr(start, eq - start);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::string value = line.substr(eq + 1);
        const std::size_t vstart = value.find_first_not_of(" \t");
        value = vstart == std::string::npos ? "" : value.substr(vstart);
        extra.push_back("--" + key + "=" + value);
    }
    if (args.empty()) return extra;
    std::vector<std::string> out;
    out.push_back(args.front()); // the subcommand
    out.insert(out.end(), extra.begin(), extra.end());
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

} // namespace

int main(int argc, char** argv) {
    // spell the documented short aliases out before parsing
    std::vector<std::string> raw;
    raw.reserve(static_cast<std::size_t>(argc));
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "-cs") raw.emplace_back("--cage-source");
        else if (a == "-cd") raw.emplace_back("--cage-deformed");
        else raw.emplace_back(a);
    }
    std::vector<std::string> storage;
    try {
        storage = expand_config(raw);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::vector<const char*> args;
    args.push_back(argv[0]);
    for (const std::string& s : storage) args.push_back(s.c_str());

    CLI::App app{"cage building and cage-based deformation for gaussian splat scenes"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.footer("options may also be given as flat key=value lines in a file passed via --config");

    // ---- build-cage ----
    auto* build = app.add_subcommand("build-cage", "reconstruct a deformation cage from a scene");
    std::filesystem::path b_in, b_out, b_report, b_json, b_debug;
    CageBuildConfig bcfg;
    CommonOptions b_common;
    build->add_option("scene", b_in, "input scene .ply")->required();
    build->add_option("-o,--output", b_out, "output cage mesh (.obj or .ply)")->required();
    build->add_option("--target-vertices", bcfg.target_vertex_count, "cage vertex budget");
    build->add_option("--voxel-res", bcfg.voxel_resolution, "reconstruction grid resolution");
    build->add_option("--rings", bcfg.num_rings, "camera rings");
    build->add_option("--cameras-per-ring", bcfg.cameras_per_ring, "cameras per ring");
    build->add_option("--expand", bcfg.expand_factor, "camera sphere expansion factor");
    build->add_option("--image-size", bcfg.image_width, "depth image width and height")
        ->each([&bcfg](const std::string& v) { bcfg.image_height = std::stoi(v); });
    build->add_option("--tsdf-trunc", bcfg.tsdf_truncation_voxels, "tsdf truncation in voxels");
    build->add_option("--closing-radius", bcfg.closing_radius_voxels,
                      "morphological closing radius in voxels");
    build->add_option("--carve-margin", bcfg.carve_margin_voxels, "carving margin in voxels");
    build->add_option("--alpha-min", bcfg.opacity_cutoff, "opacity cutoff for rendering");
    build->add_option("--iso-sigmas", bcfg.iso_sigmas, "iso surface level in sigmas");
    build->add_option("--alternate-start", bcfg.alternate_start_vertices,
                      "vertex count where two-stage alternation begins");
    build->add_option("--collapses-per-cycle", bcfg.collapses_per_cycle, "stage 1 batch size");
    build->add_option("--gd-steps", bcfg.gd_steps_per_cycle, "stage 2 steps per cycle");
    build->add_option("--samples", bcfg.sample_count, "object surface sample count");
    build->add_option("--mu", bcfg.mvc_penalty_mu, "negative MVC penalty weight");
    build->add_option("--rho", bcfg.mvc_anchor_rho, "vertex anchor weight");
    build->add_option("--lr", bcfg.learning_rate, "stage 2 learning rate");
    build->add_flag("--no-stage2", [&bcfg](std::int64_t) { bcfg.two_stage = false; },
                    "disable the MVC refinement stage");
    build->add_option("--bilateral-iterations", bcfg.bilateral_iterations,
                      "mesh smoothing iterations");
    build->add_option("--report", b_report, "write the key=value report here");
    build->add_option("--json", b_json, "write the JSON report here");
    build->add_option("--dump-debug", b_debug, "directory for per-stage debug dumps");
    add_common(build, b_common);

    // ---- deform ----
    auto* deform = app.add_subcommand("deform", "apply a cage deformation to a scene");
    std::filesystem::path d_scene, d_cs, d_cd, d_out, d_cache;
    DeformConfig dcfg;
    CommonOptions d_common;
    bool d_report = false;
    std::string d_mode = "pre";
    deform->add_option("scene", d_scene, "input scene .ply")->required();
    deform->add_option("--cage-source", d_cs, "source cage mesh (also -cs)")->required();
    deform->add_option("--cage-deformed", d_cd, "deformed cage mesh (also -cd)")->required();
    deform->add_option("-o,--output", d_out, "output scene .ply")->required();
    deform->add_option("--cache", d_cache, "cache file, built on first use and reused after");
    deform->add_flag("--report", d_report, "print split count and timing to stdout");
    deform->add_option("--split-threshold", dcfg.split_threshold_deg,
                       "bend angle threshold in degrees");
    deform->add_option("--min-split-len", dcfg.min_split_axis_len,
                       "smallest source axis worth splitting");
    deform->add_option("--split-factor", dcfg.split_factor_k, "child axis scaling factor");
    deform->add_option("--split-rounds", dcfg.max_split_rounds, "bend detection passes");
    deform->add_option("--split-mode", d_mode, "pre | post (simplified post-deformation split)")
        ->check(CLI::IsMember({"pre", "post"}));
    deform->add_flag("--no-hull-gate", [&dcfg](std::int64_t) { dcfg.hull_gate = false; },
                     "deform every gaussian, not only those inside the cage hull");
    add_common(deform, d_common);

    // ---- metrics ----
    auto* metrics = app.add_subcommand("metrics", "measure cage quality");
    std::filesystem::path m_mesh, m_scene, m_report, m_json;
    int m_samples = 256;
    CommonOptions m_common;
    metrics->add_option("mesh", m_mesh, "cage mesh (.obj or .ply)")->required();
    metrics->add_option("--scene", m_scene, "scene .ply for enclosure and MVC statistics");
    metrics->add_option("--samples", m_samples, "sample count drawn from the scene");
    metrics->add_option("-o,--output", m_report, "write the key=value report here");
    metrics->add_option("--json", m_json, "write the JSON report here");
    add_common(metrics, m_common);

    // ---- convert ----
    auto* convert = app.add_subcommand("convert", "complete flat-disk splats to volumetric ones");
    std::filesystem::path c_in, c_out;
    convert->add_option("input", c_in, "input scene .ply (two-scale layout accepted)")
        ->required();
    convert->add_option("-o,--output", c_out, "output scene .ply")->required();

    try {
        app.parse(static_cast<int>(args.size()), args.data());

        if (build->parsed()) {
            bcfg.threads = b_common.threads;
            bcfg.seed = b_common.seed;
            bcfg.validate();
            return run_build_cage(b_in, b_out, bcfg, b_report, b_json, b_debug);
        }
        if (deform->parsed()) {
            dcfg.threads = d_common.threads;
            dcfg.split_mode = d_mode == "post" ? SplitMode::PostMvcSimplified : SplitMode::PreMvc;
            dcfg.validate();
            return run_deform(d_scene, d_cs, d_cd, d_out, dcfg, d_cache, d_report);
        }
        if (metrics->parsed())
            return run_metrics(m_mesh, m_scene, m_samples, m_common.seed, m_common.threads,
                               m_report, m_json);
        if (convert->parsed()) return run_convert(c_in, c_out);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
