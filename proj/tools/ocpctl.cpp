// Command-line front end. Links only the C interface.
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <pthread.h>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "ocp/ocp.h"

namespace {

struct Settings {
  std::string listen = "127.0.0.1:8080";
  std::string data_dir = "ocp-data";
  std::string placement;
  std::uint64_t cache_mb = 256;
  unsigned threads = 16;
};

class Failure : public std::runtime_error {
 public:
  explicit Failure(ocp_status s) : std::runtime_error(ocp_last_error()), status(s) {}
  ocp_status status;
};

void check(ocp_status s) {
  if (s != OCP_OK) throw Failure(s);
}

// Owns a returned buffer for the rest of the scope.
class Buffer {
 public:
  ~Buffer() { ocp_buffer_free(buf_); }
  ocp_buffer** out() { return &buf_; }
  std::string str() const {
    return std::string(reinterpret_cast<const char*>(ocp_buffer_data(buf_)), ocp_buffer_size(buf_));
  }

 private:
  ocp_buffer* buf_ = nullptr;
};

class Engine {
 public:
  explicit Engine(const Settings& s) {
    check(ocp_open(s.data_dir.c_str(), s.placement.empty() ? nullptr : s.placement.c_str(), s.cache_mb << 20, &e_));
  }
  ~Engine() { ocp_close(e_); }
  ocp_engine* get() const { return e_; }

 private:
  ocp_engine* e_ = nullptr;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), {}};
}

// "@file" reads the document from a file; anything else is taken literally.
std::string document(const std::string& arg) { return arg.rfind('@', 0) == 0 ? slurp(arg.substr(1)) : arg; }

std::pair<std::string, int> split_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw std::runtime_error("listen address is host:port");
  return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
}

void serve(const Settings& s) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Engine engine(s);
  const auto [host, port] = split_listen(s.listen);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    ocp_stop(engine.get());
  });
  std::cerr << "listening on " << host << ":" << port << "\n";
  const auto status = ocp_serve(engine.get(), host.c_str(), port, s.threads);
  if (status != OCP_OK) {
    // Wake the waiter so the thread can be joined.
    pthread_kill(waiter.native_handle(), SIGTERM);
  }
  waiter.join();
  check(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volumetric database engine and REST service"};
  app.set_config("--config", "", "INI/TOML file with listen, data-dir and placement");
  app.require_subcommand(1);

  Settings s;
  app.add_option("--listen", s.listen, "host:port for serve")->capture_default_str();
  app.add_option("--data-dir", s.data_dir, "Catalog and default backend directory")->capture_default_str();
  app.add_option("--placement", s.placement, "Placement file (default <data-dir>/placement.conf)");
  app.add_option("--cache-mb", s.cache_mb, "Cuboid cache size")->capture_default_str();
  app.add_option("--threads", s.threads, "Request worker threads")->capture_default_str();

  std::string token, arg, arg2, arg3, body_file;
  std::function<void()> action;

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->callback([&] { action = [&] { serve(s); }; });

  auto* cds = app.add_subcommand("create-dataset", "Create a dataset from JSON (literal or @file)");
  cds->add_option("json", arg)->required();
  cds->callback([&] {
    action = [&] {
      Engine e(s);
      check(ocp_create_dataset(e.get(), document(arg).c_str()));
    };
  });

  auto* cpr = app.add_subcommand("create-project", "Create a project from JSON (literal or @file)");
  cpr->add_option("json", arg)->required();
  cpr->callback([&] {
    action = [&] {
      Engine e(s);
      check(ocp_create_project(e.get(), document(arg).c_str()));
    };
  });

  auto* desc = app.add_subcommand("describe", "Print a dataset or project configuration");
  desc->add_option("kind", arg, "dataset or project")->required()->check(CLI::IsMember({"dataset", "project"}));
  desc->add_option("name", token)->required();
  desc->callback([&] {
    action = [&] {
      Engine e(s);
      Buffer b;
      check(ocp_describe(e.get(), arg.c_str(), token.c_str(), b.out()));
      std::cout << b.str() << "\n";
    };
  });

  auto* req = app.add_subcommand("request", "Dispatch one REST request in-process; body goes to stdout");
  req->add_option("method", arg)->required();
  req->add_option("target", arg2)->required();
  req->add_option("--body", body_file, "File holding the request body");
  req->callback([&] {
    action = [&] {
      Engine e(s);
      const std::string body = body_file.empty() ? std::string() : slurp(body_file);
      int status = 0;
      Buffer b;
      check(ocp_request(e.get(), arg.c_str(), arg2.c_str(), body.data(), body.size(), &status, b.out()));
      std::cerr << "HTTP " << status << "\n";
      std::cout << b.str();
      if (status >= 400) throw std::runtime_error("request failed");
    };
  });

  auto* ing = app.add_subcommand("ingest", "Load <z>.png slices into level 0 and build the pyramid");
  ing->add_option("project", token)->required();
  ing->add_option("dir", arg)->required();
  ing->callback([&] {
    action = [&] {
      Engine e(s);
      check(ocp_ingest(e.get(), token.c_str(), arg.c_str()));
    };
  });

  auto* bp = app.add_subcommand("build-pyramid", "Rebuild every derived image resolution");
  bp->add_option("project", token)->required();
  bp->callback([&] {
    action = [&] {
      Engine e(s);
      check(ocp_build_pyramid(e.get(), token.c_str()));
    };
  });

  auto* prop = app.add_subcommand("propagate", "Propagate annotations to every resolution");
  prop->add_option("project", token)->required();
  prop->callback([&] {
    action = [&] {
      Engine e(s);
      check(ocp_propagate(e.get(), token.c_str()));
    };
  });

  ocp_synth_options synth{0, 0, 1, 40};
  auto* syn = app.add_subcommand("synth-annotations", "Generate synapse blobs and thin dendrites");
  syn->add_option("project", token)->required();
  syn->add_option("--synapses", synth.synapses)->capture_default_str();
  syn->add_option("--dendrites", synth.dendrites)->capture_default_str();
  syn->add_option("--seed", synth.seed)->capture_default_str();
  syn->add_option("--batch", synth.batch)->capture_default_str();
  syn->callback([&] {
    action = [&] {
      Engine e(s);
      Buffer b;
      check(ocp_synth_annotations(e.get(), token.c_str(), &synth, b.out()));
      std::cout << b.str() << "\n";
    };
  });

  std::vector<std::uint32_t> sizes{1}, parallel{1};
  std::string mode = "aligned";
  ocp_cutout_bench cut{};
  cut.requests = 16;
  cut.trials = 1;
  cut.seed = 7;
  auto* mc = app.add_subcommand("measure-cutout", "Cutout throughput CSV: mode,size,parallel,mb_per_s,cuboids_read");
  mc->add_option("project", token)->required();
  mc->add_option("--sizes", sizes, "Cutout sizes in MB (powers of two)")->delimiter(',');
  mc->add_option("--parallel", parallel, "Concurrent request counts")->delimiter(',');
  mc->add_option("--mode", mode)->check(CLI::IsMember({"aligned", "unaligned", "cached"}))->capture_default_str();
  mc->add_option("--requests", cut.requests)->capture_default_str();
  mc->add_option("--trials", cut.trials)->capture_default_str();
  mc->add_option("--seed", cut.seed)->capture_default_str();
  mc->callback([&] {
    action = [&] {
      Engine e(s);
      cut.mode = mode.c_str();
      cut.sizes_mb = sizes.data();
      cut.n_sizes = sizes.size();
      cut.parallel = parallel.data();
      cut.n_parallel = parallel.size();
      Buffer b;
      check(ocp_measure_cutout(e.get(), token.c_str(), &cut, b.out()));
      std::cout << b.str();
    };
  });

  ocp_write_bench wb{400, 1, 1, 11};
  auto* mw = app.add_subcommand("measure-write", "Annotation write CSV with index round trips per object");
  mw->add_option("project", token)->required();
  mw->add_option("--objects", wb.objects)->capture_default_str();
  mw->add_option("--batch", wb.batch)->capture_default_str();
  mw->add_option("--parallel", wb.parallel)->capture_default_str();
  mw->add_option("--seed", wb.seed)->capture_default_str();
  mw->callback([&] {
    action = [&] {
      Engine e(s);
      Buffer b;
      check(ocp_measure_write(e.get(), token.c_str(), &wb, b.out()));
      std::cout << b.str();
    };
  });

  auto* ver = app.add_subcommand("verify", "Index soundness and cutout round-trip check");
  ver->add_option("project", token)->required();
  ver->callback([&] {
    action = [&] {
      Engine e(s);
      Buffer b;
      check(ocp_verify(e.get(), token.c_str(), b.out()));
      std::cout << b.str() << "\n";
    };
  });

  auto* ab = app.add_subcommand("add-backend", "Register a storage backend in the placement file");
  ab->add_option("id", arg)->required();
  ab->add_option("kind", arg2, "sqlite or memory")->required()->check(CLI::IsMember({"sqlite", "memory"}));
  ab->add_option("path", arg3, "Database file for sqlite");
  ab->callback([&] {
    action = [&] {
      Engine e(s);
      check(ocp_add_backend(e.get(), arg.c_str(), arg2.c_str(), arg3.c_str()));
    };
  });

  auto* mig = app.add_subcommand("migrate", "Copy, verify, switch and delete a project's keys between backends");
  mig->add_option("project", token)->required();
  mig->add_option("from", arg)->required();
  mig->add_option("to", arg2)->required();
  mig->callback([&] {
    action = [&] {
      Engine e(s);
      check(ocp_migrate(e.get(), token.c_str(), arg.c_str(), arg2.c_str()));
    };
  });

  auto* pr = app.add_subcommand("placement-report", "Keys and bytes per backend for a project");
  pr->add_option("project", token)->required();
  pr->callback([&] {
    action = [&] {
      Engine e(s);
      Buffer b;
      check(ocp_placement_report(e.get(), token.c_str(), b.out()));
      std::cout << b.str() << "\n";
    };
  });

  CLI11_PARSE(app, argc, argv);
  try {
    action();
  } catch (const Failure& f) {
    std::cerr << "error (" << ocp_status_name(f.status) << "): " << f.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
