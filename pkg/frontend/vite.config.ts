import { defineConfig } from "vitest/config";

// The dev server proxies API calls to a locally running
// `loopcurate serve` (default port 8008).
export default defineConfig({
  server: {
    proxy: {
      "/projects": "http://127.0.0.1:8008",
    },
  },
  test: {
    environment: "node",
    globalSetup: "./tests/globalSetup.ts",
    fileParallelism: false,
    testTimeout: 30_000,
    hookTimeout: 120_000,
    include: ["tests/**/*.test.ts"],
  },
});
