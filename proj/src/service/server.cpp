#include "knobrec/service.hpp"

#include "knobrec/errors.hpp"

#include <httplib.h>

#include <iostream>

namespace knobrec::service {

namespace {

void reply(httplib::Response& res, const Response& r) {
    res.status = r.status;
    if (r.status == 204) return;
    res.set_content(r.body.dump(), "application/json");
}

} // namespace

void mount(httplib::Server& server, RecommendationService& service) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/model/info", [&](const httplib::Request&, httplib::Response& res) { reply(res, service.model_info()); });
    server.Get("/factors", [&](const httplib::Request&, httplib::Response& res) { reply(res, service.factors()); });
    server.Post("/recommendations", [&](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.recommendations(req.body));
    });
    server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.create_session(req.body));
    });
    server.Get(R"(/sessions/([A-Za-z0-9]+))", [&](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.get_session(req.matches[1]));
    });
    server.Delete(R"(/sessions/([A-Za-z0-9]+))", [&](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.delete_session(req.matches[1]));
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            if (ep) std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        }
        res.status = 500;
        res.set_content(nlohmann::json{{"error", what}}.dump(), "application/json");
    });
}

void serve(RecommendationService& service, const std::string& host, int port) {
    httplib::Server server;
    mount(server, service);
    std::cerr << "serving on http://" << host << ':' << port << '\n';
    if (!server.listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
}

} // namespace knobrec::service
