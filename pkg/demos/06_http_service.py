"""Serve a trained model over HTTP and exercise the endpoints.

The service binds before the model loads so orchestration can poll
GET /health; translation requests are rejected with 503 until ready.
"""

import http.client
import json
import threading

import numpy as np

from mnmt import (Direction, MixtureStream, ModelConfig, SubwordModel,
                  TrainConfig, TranslationService, encode_pair, make_server,
                  register_language, train)

register_language("en")

alphabet = "abcdehilmnorstw"
model = SubwordModel([(c, float(np.log(1 / 16))) for c in sorted(alphabet)] + [("▁", float(np.log(1 / 16)))],
                     control_langs=("en",))

rng = np.random.Generator(np.random.PCG64(3))
words = ["the", "cat", "dash", "mole", "wire", "salt", "him", "rows"]
lines = [" ".join(words[int(rng.integers(8))] for _ in range(int(rng.integers(2, 5))))
         for _ in range(24)]
examples = [encode_pair(model, l, l, Direction("en", "en"), "copy") for l in lines]

mconfig = ModelConfig(vocab_size=len(model), d_model=32, n_heads=2,
                      n_enc_layers=1, n_dec_layers=1, d_ff=64, dropout=0.0,
                      label_smoothing=0.0, max_len=32, dtype="float32")
tconfig = TrainConfig(seed=3, peak_lr=5e-3, warmup_steps=30, max_steps=900,
                      checkpoint_every=900, token_budget=512)
ckpt = train(mconfig, tconfig, MixtureStream([(examples, 1.0)], temperature=1.0, seed=3),
             vocab_hash=model.vocab_hash)

service = TranslationService(workers=4)
server = make_server(service, host="127.0.0.1", port=0)
thread = threading.Thread(target=server.serve_forever, daemon=True)
thread.start()
host, port = server.server_address
print(f"listening on {host}:{port}")


def request(method, path, body=None):
    conn = http.client.HTTPConnection(host, port, timeout=10)
    conn.request(method, path, body=None if body is None else json.dumps(body),
                 headers={"Content-Type": "application/json"})
    resp = conn.getresponse()
    payload = json.loads(resp.read().decode("utf-8"))
    conn.close()
    return resp.status, payload


print("health before load:", request("GET", "/health"))
service.load(ckpt, model)
print("health after load: ", request("GET", "/health"))
status, reply = request("POST", "/translate",
                        {"text": lines[0], "src": "en", "tgt": "en"})
print(f"translate -> {status} {reply}")
status, reply = request("POST", "/translate", {"text": "hi", "src": "en"})
print(f"missing field -> {status} {reply}")

server.shutdown()
thread.join()
print("server stopped")
