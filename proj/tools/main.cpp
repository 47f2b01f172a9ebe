#include <cstdint>
#include <iostream>
#include <string>
#include <utility>

#include "CLI11.hpp"

#include "traffic/checkpoint.hpp"
#include "traffic/cli.hpp"
#include "traffic/graph.hpp"
#include "traffic/serve.hpp"

int main(int argc, char** argv) {
    CLI::App app{"spatio-temporal traffic flow forecasting"};
    app.require_subcommand(1);

    traffic::GenerateArgs gen_args;
    CLI::App* gen = app.add_subcommand("generate", "write a synthetic corpus");
    gen->add_option("--config", gen_args.config_path, "run configuration JSON");
    gen->add_option("--out", gen_args.out_dir, "output directory")->required();
    gen->add_option("--seed", gen_args.seed, "override the config seed");

    traffic::TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train a model on a corpus");
    train->add_option("--config", train_args.config_path, "run configuration JSON");
    train->add_option("--data", train_args.data_dir, "corpus directory")->required();
    train->add_option("--out", train_args.out_dir, "output directory")->required();
    train->add_option("--seed", train_args.seed, "override the config seed");
    train->add_option("--ablate", train_args.ablate,
                      "disable a branch: gnn, temporal or fusion (repeatable)");

    traffic::EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "score a checkpoint and its ablations");
    eval->add_option("--checkpoint", eval_args.checkpoint_path, "checkpoint JSON")->required();
    eval->add_option("--data", eval_args.data_dir, "corpus directory")->required();
    eval->add_option("--out", eval_args.out_dir, "output directory")->required();

    traffic::GradcheckArgs gc_args;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
    gradcheck->add_option("--config", gc_args.config_path, "run configuration JSON");
    gradcheck->add_option("--seed", gc_args.seed, "parameter initialization seed");
    gradcheck->add_option("--tol", gc_args.tol, "max relative error allowed");
    gradcheck->add_option("--eps", gc_args.eps, "finite-difference step");

    traffic::ForecastArgs fc_args;
    CLI::App* forecast = app.add_subcommand("forecast", "forecast from a window CSV");
    forecast->add_option("--checkpoint", fc_args.checkpoint_path, "checkpoint JSON")->required();
    forecast->add_option("--graph", fc_args.graph_path, "graph CSV")->required();
    forecast->add_option("--window", fc_args.window_path, "traffic CSV with one full window")
        ->required();
    forecast->add_option("--external", fc_args.external_path, "matching external CSV")->required();
    forecast->add_option("--out", fc_args.out_path, "write rows here instead of stdout");

    std::string serve_ckpt, serve_graph, serve_host = "127.0.0.1";
    int serve_port = 8080;
    CLI::App* serve = app.add_subcommand("serve", "online forecast service");
    serve->add_option("--checkpoint", serve_ckpt, "checkpoint JSON")->required();
    serve->add_option("--graph", serve_graph, "graph CSV")->required();
    serve->add_option("--host", serve_host, "bind address");
    serve->add_option("--port", serve_port, "bind port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        app.exit(e);
        return 1;
    }

    return traffic::run_command(
        [&]() -> int {
            if (gen->parsed()) {
                traffic::cmd_generate(gen_args, std::cout);
            } else if (train->parsed()) {
                traffic::cmd_train(train_args, std::cout);
            } else if (eval->parsed()) {
                traffic::cmd_eval(eval_args, std::cout);
            } else if (gradcheck->parsed()) {
                return traffic::cmd_gradcheck(gc_args, std::cout) ? 0 : 1;
            } else if (forecast->parsed()) {
                traffic::cmd_forecast(fc_args, std::cout);
            } else if (serve->parsed()) {
                traffic::Checkpoint ckpt = traffic::load_checkpoint(serve_ckpt);
                traffic::RoadGraph graph = traffic::load_graph_csv(serve_graph);
                traffic::run_service(std::move(ckpt), std::move(graph), serve_host, serve_port,
                                     std::cout);
            }
            return 0;
        },
        std::cerr);
}
