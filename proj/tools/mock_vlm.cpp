// Standalone mock VLM server for manual runs against `vlagen caption`.

#include <iostream>

#include <CLI11.hpp>

#include "vlagen/errors.hpp"
#include "vlagen/vlm.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Scripted stand-in for a video-language model server."};
  std::string host = "127.0.0.1";
  int port = 8089;
  std::string fixture;
  bool echo = false;
  app.add_option("--host", host, "bind address");
  app.add_option("--port", port, "listen port");
  app.add_option("--fixture", fixture, "JSON fixture file")->check(CLI::ExistingFile);
  app.add_flag("--echo", echo, "reply to caption requests with the prompt");
  CLI11_PARSE(app, argc, argv);

  try {
    vlagen::MockVlmScript script;
    if (!fixture.empty()) script = vlagen::MockVlmScript::from_file(fixture);
    if (echo) script.echo = true;
    vlagen::MockVlmServer server(script);
    std::cerr << "mock VLM listening on http://" << host << ":" << port << '\n';
    server.serve_forever(host, port);
  } catch (const vlagen::Error& e) {
    std::cerr << "mock_vlm: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
