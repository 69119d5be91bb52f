import {defineConfig} from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    globalSetup: "./test/server.global.ts",
    testTimeout: 30000,
    hookTimeout: 30000,
  },
});
